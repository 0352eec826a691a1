#pragma once

#include "forge/curation.hpp"
#include "forge/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace forge {

struct PipelineConfig {
    struct Paths {
        std::filesystem::path videos, classes, annotations, corpus, embeddings, output;
    } paths;

    int timesteps = 100;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    int embed_dim = 32;
    LatentMode latent = LatentMode::Identity;
    bool literal_inversion = false;

    int frames_select = 3;
    bool raw_phi = false;

    int stage1_steps = 200;
    int stage2_steps = 100;
    double learning_rate = 0.01;
    std::string instance_token = "[v]";
    std::string class_prompt = "a person";

    int inversion_steps = 50;
    int sampling_steps = 50;
    bool null_prompt_inversion = false;

    long k = 8;
    long l = 4;
    AssembleMode mode = AssembleMode::Replace;
    InjectPlacement placement = InjectPlacement::After;
    HarmonicAggregation aggregation = HarmonicAggregation::Aggregate;

    std::vector<double> thresholds{0.3, 0.5, 0.7};
    int rank = 1;
    int windows = 12;

    std::optional<std::uint64_t> seed;
    int jobs = 1;

    /// Problems found while parsing (bad numbers, unknown enum values).
    std::vector<std::string> parse_errors;
};

/// Reads an INI file. Relative paths resolve against the file's directory.
/// Value errors are collected in `parse_errors` rather than thrown.
PipelineConfig load_config(const std::filesystem::path& path);

/// Every structural problem, one human-readable line each; empty when valid.
std::vector<std::string> validate_config(const PipelineConfig& config);

/// Digest of every setting that influences outputs (paths and jobs excluded).
std::string config_hash(const PipelineConfig& config);

struct StageRecord {
    std::string name;
    std::string input_digest;
    std::string output_digest;
    double seconds = 0.0;
    bool skipped = false;
};

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::vector<StageRecord> stages;
};

inline const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> names{"split", "frames", "train", "edit", "score", "select", "assemble", "eval"};
    return names;
}

struct RunOptions {
    /// Re-run stages even when their marker matches.
    bool force = false;
    /// Stop after this stage (empty: run everything).
    std::string until;
};

/// Runs the stages in order. Throws ValidationError before any work when the
/// config is invalid and StageError when a stage fails; completed stages stay
/// on disk so a rerun resumes after them. Writes manifest.json to the output.
RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

std::string manifest_json(const RunManifest& manifest);

}  // namespace forge
