#pragma once

#include "forge/moments.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace forge {

/// Per-frame vectors produced by an external encoder. `source_tag` names the
/// encoder family ("joint" for text-image, "structure" for self-supervised).
struct EmbeddingSet {
    std::vector<Eigen::VectorXd> per_frame;
    std::string source_tag;

    int dim() const noexcept { return per_frame.empty() ? 0 : static_cast<int>(per_frame.front().size()); }
    std::size_t frames() const noexcept { return per_frame.size(); }
};

/// Header "FEMB" | u32 frame count | u32 dimension, then float32 rows.
EmbeddingSet read_embeddings(const std::filesystem::path& path, std::string source_tag = {});
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);

/// Throws InvalidInput on zero-norm or mismatched vectors.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean over frames of cos(frame, prompt).
double prompt_fidelity(const EmbeddingSet& joint, const Eigen::VectorXd& prompt_vec);
/// Mean over frame index of cos(src[i], gen[i]).
double structure_fidelity(const EmbeddingSet& src, const EmbeddingSet& gen);
/// 2ps / (p + s); throws UndefinedScoreError unless both are positive.
double harmonic_score(double p, double s);
/// harmonic_score, or 0 when either input is nonpositive.
double h_score_or_zero(double p, double s);

struct GeneratedMoment {
    std::string id;
    std::string source_video_id;
    int source_moment_index = 0;
    std::string edit_prompt;
    /// Span of the edited moment in its variant video.
    TemporalSpan span;
    // Artifact paths, relative to the run directory.
    std::string frames;
    std::string joint_embeddings;
    std::string structure_embeddings;
    std::string source_structure_embeddings;
    std::string prompt_embedding;
    double prompt_fid = 0.0;
    double struct_fid = 0.0;
    double h_score = 0.0;
    std::string config_hash;
};

/// Recomputes the three scores from the embeddings referenced by `m`.
void rescore(GeneratedMoment& m, const std::filesystem::path& base_dir);
void score_moment(GeneratedMoment& m, const EmbeddingSet& joint, const Eigen::VectorXd& prompt_vec,
                  const EmbeddingSet& source_structure, const EmbeddingSet& structure);

class CandidatePool {
public:
    CandidatePool() = default;
    explicit CandidatePool(std::vector<GeneratedMoment> items, std::string provenance = {});

    /// Throws InvalidInput on a duplicate id.
    void add(GeneratedMoment m);
    const std::vector<GeneratedMoment>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    const std::string& provenance() const noexcept { return provenance_; }
    void set_provenance(std::string p) { provenance_ = std::move(p); }

private:
    std::vector<GeneratedMoment> items_;
    std::string provenance_;
};

/// Newline-delimited JSON, one GeneratedMoment per line.
CandidatePool read_pool(const std::filesystem::path& path);
void write_pool(const std::filesystem::path& path, const CandidatePool& pool);

/// The k items with highest h_score, descending; ties by ascending id.
CandidatePool quantitative_select(const CandidatePool& pool, std::size_t k);
/// The l items with lowest retrieval score, ascending; ties by ascending id.
CandidatePool qualitative_select(const CandidatePool& filtered, const std::map<std::string, double>& vmr_scores,
                                 std::size_t l);

/// CSV with header "id,score".
std::map<std::string, double> read_scores_csv(const std::filesystem::path& path);
void write_scores_csv(const std::filesystem::path& path, const std::map<std::string, double>& scores);

enum class HarmonicAggregation {
    /// Harmonic mean of the pool-mean fidelities.
    Aggregate,
    /// Mean of per-item harmonic scores.
    PerSample,
};

struct PoolReport {
    double mean_prompt_fid = 0.0;
    double mean_struct_fid = 0.0;
    double h_score = 0.0;
};
PoolReport pool_report(const CandidatePool& pool, HarmonicAggregation mode);

// ---------------------------------------------------------------- assembly

struct VideoMoment {
    TemporalSpan span;
    std::string query;
    std::string frames;
    bool generated = false;
};

/// A video as an ordered, non-overlapping list of annotated moments.
struct Video {
    std::string video_id;
    double fps = 1.0;
    std::vector<VideoMoment> moments;

    double duration() const noexcept { return moments.empty() ? 0.0 : moments.back().span.end; }
};

/// Throws InvalidInput unless spans are ordered and non-overlapping.
void validate_video(const Video& video);
Video read_video(const std::filesystem::path& path);
void write_video(const std::filesystem::path& path, const Video& video);

struct EditedMoment {
    double duration = 0.0;
    std::string query;
    std::string frames;
};

enum class AssembleMode { Replace, Inject };
enum class InjectPlacement { After, Before };

/// Replace substitutes moment i (durations must match). Inject inserts the
/// edited moment next to moment i and shifts every later span.
Video assemble_variant(const Video& video, std::size_t index, const EditedMoment& edited, AssembleMode mode,
                       InjectPlacement placement = InjectPlacement::After);

// ------------------------------------------------------------- training set

struct TrainingEntry {
    std::string id;
    MomentAnnotation annotation;
    /// "source" or "generated".
    std::string origin;
    /// Video whose timeline the annotation lives on (the source video for
    /// generated variants).
    std::string context_video_id;
};

using Dataset = std::vector<TrainingEntry>;

/// Source entries followed by the selected generated moments; ids must be
/// disjoint.
Dataset build_training_set(const Dataset& source, const CandidatePool& selected);

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace forge
