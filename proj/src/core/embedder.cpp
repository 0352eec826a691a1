#include "forge/embedder.hpp"

#include "forge/diffusion.hpp"
#include "forge/error.hpp"
#include "forge/vmr_eval.hpp"

#include <random>

namespace forge {

namespace fs = std::filesystem;

namespace {
constexpr const char* kProjectionFile = "joint_projection.femb";
}

Eigen::VectorXd pooled_luma(const Frame& f, int grid) {
    const auto luma = f.luma();
    const int w = f.width(), h = f.height();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(grid * grid);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(grid * grid);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int cell = (y * grid / h) * grid + x * grid / w;
            sum(cell) += luma[static_cast<std::size_t>(y) * w + x];
            count(cell) += 1.0;
        }
    for (int cy = 0; cy < grid; ++cy)
        for (int cx = 0; cx < grid; ++cx) {
            const int cell = cy * grid + cx;
            if (count(cell) > 0.0) {
                sum(cell) /= count(cell);
            } else {
                // smaller than the grid: nearest pixel
                const int y = cy * h / grid, x = cx * w / grid;
                sum(cell) = luma[static_cast<std::size_t>(y) * w + x];
            }
        }
    return sum;
}

ToyEmbedder::ToyEmbedder(const fs::path& embeddings_dir)
    : ToyEmbedder(read_embeddings(embeddings_dir / kProjectionFile, "joint")) {}

ToyEmbedder::ToyEmbedder(EmbeddingSet projection) {
    if (projection.per_frame.empty()) throw InvalidInput("empty joint projection");
    constexpr int cols = kJointGrid * kJointGrid;
    projection_.resize(static_cast<Eigen::Index>(projection.frames()), cols);
    for (std::size_t r = 0; r < projection.frames(); ++r) {
        if (projection.per_frame[r].size() != cols)
            throw InvalidInput("joint projection rows must have " + std::to_string(cols) + " entries");
        projection_.row(static_cast<Eigen::Index>(r)) = projection.per_frame[r].transpose();
    }
}

void ToyEmbedder::write_projection(const fs::path& embeddings_dir, int dim, std::uint64_t seed) {
    if (dim < 1) throw InvalidInput("projection dimension must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / kJointGrid);
    EmbeddingSet set;
    set.source_tag = "joint";
    for (int r = 0; r < dim; ++r) {
        Eigen::VectorXd row(kJointGrid * kJointGrid);
        for (Eigen::Index i = 0; i < row.size(); ++i) row(i) = normal(rng);
        set.per_frame.push_back(std::move(row));
    }
    write_embeddings(embeddings_dir / kProjectionFile, set);
}

EmbeddingSet ToyEmbedder::joint(std::span<const Frame> frames) const {
    EmbeddingSet out;
    out.source_tag = "joint";
    for (const auto& f : frames) {
        Eigen::VectorXd v(joint_dim());
        v(0) = 1.0;
        v.tail(joint_dim() - 1) = projection_ * (pooled_luma(f, kJointGrid).array() - 0.5).matrix();
        out.per_frame.push_back(std::move(v));
    }
    return out;
}

Eigen::VectorXd ToyEmbedder::text(const std::string& prompt) const {
    const int d = joint_dim() - 1;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d + 1);
    v(0) = 1.0;
    const auto words = content_words(prompt);
    for (const auto& w : words) v.tail(d) += hashed_embedding(w, d).transpose();
    if (!words.empty()) v.tail(d) *= 0.5 / static_cast<double>(words.size());
    return v;
}

EmbeddingSet ToyEmbedder::structure(std::span<const Frame> frames) const {
    EmbeddingSet out;
    out.source_tag = "structure";
    for (const auto& f : frames) {
        Eigen::VectorXd v(kStructureGrid * kStructureGrid + 1);
        v(0) = 1.0;
        v.tail(kStructureGrid * kStructureGrid) = pooled_luma(f, kStructureGrid);
        out.per_frame.push_back(std::move(v));
    }
    return out;
}

}  // namespace forge
