#pragma once

#include "forge/diffusion.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace forge {

/// Stage-1 inputs: the selected instance frames and generic class images,
/// each reconstructed from its own prompt.
struct TrainingBatch {
    FrameSequence instance_frames;
    FrameSequence class_images;
    std::string instance_prompt = "a [v] person";
    std::string class_prompt = "a person";
};

struct TrainOptions {
    int steps = 200;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    LatentMode latent = LatentMode::Identity;
};

struct TrainResult {
    DenoiserModel model;
    std::vector<double> loss_history;
};

/// Seed for the `slot`-th noise draw of optimizer step `step`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t slot);

struct Stage1Objective {
    double loss = 0.0;
    double instance_loss = 0.0;
    double class_loss = 0.0;
    Gradients grads;
};

/// Instance reconstruction term plus class prior-preservation term, each the
/// mean diffusion loss over its images. Image j of the instance set uses
/// derive_seed(step_seed, 0, j); class image j uses derive_seed(step_seed, 1, j).
Stage1Objective stage1_objective(const DenoiserModel& model, const std::vector<Latent>& instance,
                                 const std::vector<Latent>& cls, const PromptEmbedding& instance_prompt,
                                 const PromptEmbedding& class_prompt, const NoiseSchedule& sched,
                                 std::uint64_t step_seed);

/// Temporal-encoding loss over all frames of a clip with one shared timestep;
/// `per_frame` holds each frame's mean squared error.
LossResult stage2_objective(const DenoiserModel& model, const Latent& clip, const PromptEmbedding& prompt,
                            const NoiseSchedule& sched, std::uint64_t step_seed);

/// Updates only spatial parameters and the token table.
TrainResult train_stage1(DenoiserModel model, const TrainingBatch& batch, const NoiseSchedule& sched,
                         const TrainOptions& options);
/// Updates only temporal parameters; the prompt's special tokens must exist.
TrainResult train_stage2(DenoiserModel model, const FrameSequence& frames, const std::string& prompt,
                         const NoiseSchedule& sched, const TrainOptions& options);

/// Mean objective over `draws` fixed noise draws; used to compare models.
double evaluate_stage1(const DenoiserModel& model, const TrainingBatch& batch, const NoiseSchedule& sched,
                       std::uint64_t seed, int draws, LatentMode latent = LatentMode::Identity);
double evaluate_stage2(const DenoiserModel& model, const FrameSequence& frames, const std::string& prompt,
                       const NoiseSchedule& sched, std::uint64_t seed, int draws,
                       LatentMode latent = LatentMode::Identity);

struct EditRequest {
    FrameSequence moment;
    std::string source_prompt;
    std::string edit_prompt;
    int inversion_steps = 50;
    int sampling_steps = 50;
    std::uint64_t seed = 0;
};

struct EditOptions {
    LatentMode latent = LatentMode::Identity;
    bool literal_inversion = false;
    /// Invert under the empty prompt instead of the source prompt.
    bool null_prompt_inversion = false;
};

/// Inverts the moment under the source prompt, then samples under the edit
/// prompt. Output has the input's frame count and dimensions.
FrameSequence edit_moment(const DenoiserModel& model, const EditRequest& request, const NoiseSchedule& sched,
                          const EditOptions& options = {});

}  // namespace forge
