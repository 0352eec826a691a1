#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace forge {

/// A decoded frame. Pixels are stored planar (channel-major, then row-major)
/// and normalized to [0, 1]. Only 1- and 3-channel frames are supported.
class Frame {
public:
    Frame() = default;
    Frame(int width, int height, int channels = 1, std::size_t index = 0);
    Frame(int width, int height, int channels, std::vector<double> pixels, std::size_t index = 0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t index() const noexcept { return index_; }
    void set_index(std::size_t index) noexcept { index_ = index; }

    double& at(int c, int y, int x) { return pixels_[plane_offset(c) + static_cast<std::size_t>(y) * width_ + x]; }
    double at(int c, int y, int x) const { return pixels_[plane_offset(c) + static_cast<std::size_t>(y) * width_ + x]; }

    std::span<double> pixels() noexcept { return pixels_; }
    std::span<const double> pixels() const noexcept { return pixels_; }

    /// Grayscale intensities (BT.601 luma for color frames), row-major.
    std::vector<double> luma() const;

    bool same_shape(const Frame& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

private:
    std::size_t plane_offset(int c) const noexcept {
        return static_cast<std::size_t>(c) * width_ * height_;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::size_t index_ = 0;
    std::vector<double> pixels_;
};

using FrameSequence = std::vector<Frame>;

/// Throws InvalidInput unless the frames are nonempty, share dimensions and
/// hold values in [0, 1].
void validate_sequence(std::span<const Frame> frames);

struct FrameScore {
    std::size_t index = 0;
    double dissim_prev = 0.0;
    double dissim_next = 0.0;
    double clarity = 0.0;
    double phi = 0.0;
};

inline constexpr int kHistogramBins = 32;

/// 1 - intersection of the 32-bin normalized luma histograms. Symmetric, in [0, 1].
double histogram_dissimilarity(const Frame& a, const Frame& b);

/// Variance of the 4-neighbour Laplacian response over interior pixels.
double laplacian_clarity(const Frame& f);

struct PhiOptions {
    /// Sum raw components instead of min-max normalizing each one across the
    /// sequence first.
    bool raw = false;
};

std::vector<FrameScore> phi_scores(std::span<const Frame> frames, PhiOptions options = {});

/// Indices of the `m` highest-phi frames (ties to the lower index), ascending.
std::vector<std::size_t> select_frames(std::span<const Frame> frames, std::size_t m,
                                       PhiOptions options = {});
std::vector<std::size_t> select_top(std::span<const FrameScore> scores, std::size_t m);

namespace frame_io {

/// Reads binary PGM (P5) or PPM (P6), 8- or 16-bit.
Frame read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Frame& frame, const std::string& comment = {});

/// Packed grayscale float32 planes behind a 16-byte little-endian header:
/// magic "FRMS", width, height, count (all uint32).
FrameSequence read_packed(const std::filesystem::path& path);
void write_packed(const std::filesystem::path& path, std::span<const Frame> frames);

/// Loads every .pgm/.ppm file in `dir` in lexicographic filename order, or a
/// packed file when `path` names one.
FrameSequence load_sequence(const std::filesystem::path& path);
void save_sequence(const std::filesystem::path& dir, std::span<const Frame> frames,
                   const std::string& comment = {});

}  // namespace frame_io

}  // namespace forge
