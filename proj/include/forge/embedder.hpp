#pragma once

#include "forge/curation.hpp"
#include "forge/frames.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace forge {

/// Built-in stand-in for the external text-image and structure encoders.
/// Frames are box-pooled to a fixed grid so any frame size embeds.
///   joint(frame)  = [1, P (pooled8 - 0.5)]
///   joint(text)   = [1, 0.5 * mean of hashed content-word vectors]
///   structure(f)  = [1, pooled4]
/// P is read from `joint_projection.femb` in the embeddings directory.
class ToyEmbedder {
public:
    static constexpr int kJointGrid = 8;
    static constexpr int kStructureGrid = 4;

    explicit ToyEmbedder(const std::filesystem::path& embeddings_dir);
    explicit ToyEmbedder(EmbeddingSet projection);

    /// Writes a random projection with `dim` rows.
    static void write_projection(const std::filesystem::path& embeddings_dir, int dim, std::uint64_t seed);

    int joint_dim() const noexcept { return static_cast<int>(projection_.rows()) + 1; }
    EmbeddingSet joint(std::span<const Frame> frames) const;
    Eigen::VectorXd text(const std::string& prompt) const;
    EmbeddingSet structure(std::span<const Frame> frames) const;

private:
    Eigen::MatrixXd projection_;
};

/// Mean luma over a grid x grid partition of the frame (row-major cells).
Eigen::VectorXd pooled_luma(const Frame& f, int grid);

}  // namespace forge
