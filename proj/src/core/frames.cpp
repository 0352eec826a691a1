#include "forge/frames.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace forge {

Frame::Frame(int width, int height, int channels, std::size_t index)
    : Frame(width, height, channels,
            std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) *
                                    std::max(channels, 0),
                                0.0),
            index) {}

Frame::Frame(int width, int height, int channels, std::vector<double> pixels, std::size_t index)
    : width_(width), height_(height), channels_(channels), index_(index), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0) throw InvalidInput("frame dimensions must be positive");
    if (channels != 1 && channels != 3) throw InvalidInput("frames must have 1 or 3 channels");
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels)
        throw InvalidInput("pixel buffer size does not match frame dimensions");
}

std::vector<double> Frame::luma() const {
    const std::size_t n = static_cast<std::size_t>(width_) * height_;
    if (channels_ == 1) return {pixels_.begin(), pixels_.begin() + static_cast<std::ptrdiff_t>(n)};
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = 0.299 * pixels_[i] + 0.587 * pixels_[n + i] + 0.114 * pixels_[2 * n + i];
    return out;
}

void validate_sequence(std::span<const Frame> frames) {
    if (frames.empty()) throw InvalidInput("frame sequence is empty");
    for (const auto& f : frames) {
        if (!f.same_shape(frames.front()))
            throw InvalidInput("frames in a sequence must share dimensions");
        for (double v : f.pixels())
            if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("pixel value outside [0, 1]");
    }
}

namespace {

std::array<double, kHistogramBins> luma_histogram(const Frame& f) {
    std::array<double, kHistogramBins> hist{};
    const auto values = f.luma();
    for (double v : values) {
        auto bin = static_cast<int>(v * kHistogramBins);
        hist[static_cast<std::size_t>(std::clamp(bin, 0, kHistogramBins - 1))] += 1.0;
    }
    for (double& h : hist) h /= static_cast<double>(values.size());
    return hist;
}

void min_max_normalize(std::vector<FrameScore>& scores, double FrameScore::*field,
                       bool skip_first, bool skip_last) {
    const std::size_t begin = skip_first ? 1 : 0;
    const std::size_t end = scores.size() - (skip_last ? 1 : 0);
    if (begin >= end) return;
    double lo = scores[begin].*field, hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = std::min(lo, scores[i].*field);
        hi = std::max(hi, scores[i].*field);
    }
    const double range = hi - lo;
    for (std::size_t i = begin; i < end; ++i)
        scores[i].*field = range > 0.0 ? (scores[i].*field - lo) / range : 0.0;
}

}  // namespace

double histogram_dissimilarity(const Frame& a, const Frame& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw InvalidInput("histogram_dissimilarity: frame dimensions differ");
    const auto ha = luma_histogram(a);
    const auto hb = luma_histogram(b);
    double intersection = 0.0;
    for (std::size_t i = 0; i < ha.size(); ++i) intersection += std::min(ha[i], hb[i]);
    return std::clamp(1.0 - intersection, 0.0, 1.0);
}

double laplacian_clarity(const Frame& f) {
    const int w = f.width(), h = f.height();
    if (w < 3 || h < 3) throw InvalidInput("laplacian_clarity: frame must be at least 3x3");
    const auto g = f.luma();
    auto px = [&](int y, int x) { return g[static_cast<std::size_t>(y) * w + x]; };
    std::vector<double> response;
    response.reserve(static_cast<std::size_t>(w - 2) * (h - 2));
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x)
            response.push_back(px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) -
                               4.0 * px(y, x));
    const double mean = std::accumulate(response.begin(), response.end(), 0.0) /
                        static_cast<double>(response.size());
    double var = 0.0;
    for (double r : response) var += (r - mean) * (r - mean);
    return var / static_cast<double>(response.size());
}

std::vector<FrameScore> phi_scores(std::span<const Frame> frames, PhiOptions options) {
    validate_sequence(frames);
    const std::size_t n = frames.size();
    std::vector<FrameScore> scores(n);
    std::vector<double> forward(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i + 1 < n; ++i) forward[i] = histogram_dissimilarity(frames[i], frames[i + 1]);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i].index = i;
        scores[i].dissim_prev = i > 0 ? forward[i - 1] : 0.0;
        scores[i].dissim_next = i + 1 < n ? forward[i] : 0.0;
        scores[i].clarity = laplacian_clarity(frames[i]);
    }
    if (!options.raw) {
        // Missing-neighbour terms stay 0 and are excluded from the range.
        min_max_normalize(scores, &FrameScore::dissim_prev, true, false);
        min_max_normalize(scores, &FrameScore::dissim_next, false, true);
        min_max_normalize(scores, &FrameScore::clarity, false, false);
    }
    for (auto& s : scores) s.phi = s.dissim_prev + s.dissim_next + s.clarity;
    return scores;
}

std::vector<std::size_t> select_top(std::span<const FrameScore> scores, std::size_t m) {
    if (m == 0 || m > scores.size())
        throw InvalidInput("select_frames: m must be in [1, " + std::to_string(scores.size()) + "]");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a].phi != scores[b].phi) return scores[a].phi > scores[b].phi;
                          return scores[a].index < scores[b].index;
                      });
    std::vector<std::size_t> picked;
    picked.reserve(m);
    for (std::size_t i = 0; i < m; ++i) picked.push_back(scores[order[i]].index);
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::vector<std::size_t> select_frames(std::span<const Frame> frames, std::size_t m, PhiOptions options) {
    if (frames.empty()) throw InvalidInput("frame sequence is empty");
    if (m == 0 || m > frames.size())
        throw InvalidInput("select_frames: m must be in [1, " + std::to_string(frames.size()) + "]");
    const auto scores = phi_scores(frames, options);
    return select_top(scores, m);
}

}  // namespace forge
