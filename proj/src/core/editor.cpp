#include "forge/editor.hpp"

#include "forge/error.hpp"

#include <cmath>

namespace forge {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t slot) {
    // splitmix64 finalizer over a mixed key
    std::uint64_t z = seed ^ (step * 0x9e3779b97f4a7c15ULL) ^ (slot * 0xc2b2ae3d27d4eb4fULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

std::vector<Latent> encode_each(const FrameSequence& frames, LatentMode mode) {
    std::vector<Latent> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(encode(std::span<const Frame>(&f, 1), mode));
    return out;
}

void accumulate(Gradients& into, const Gradients& g, double weight) {
    for (const auto& [name, value] : g) {
        auto it = into.find(name);
        if (it == into.end()) into.emplace(name, weight * value);
        else it->second += weight * value;
    }
}

void check_model_finite(const DenoiserModel& model, long step) {
    for (const auto& [name, value] : model.parameters())
        if (!value.allFinite()) throw DivergenceError("parameter " + name + " became non-finite", step);
}

double mean_term(const DenoiserModel& model, const std::vector<Latent>& images, const PromptEmbedding& prompt,
                 const NoiseSchedule& sched, std::uint64_t step_seed, std::uint64_t slot, Gradients* grads) {
    double total = 0.0;
    const double w = 1.0 / static_cast<double>(images.size());
    for (std::size_t j = 0; j < images.size(); ++j) {
        const auto r = ldm_loss(model, images[j], prompt, sched, derive_seed(step_seed, slot, j), GroupMask::stage1());
        total += w * r.loss;
        if (grads) accumulate(*grads, r.grads, w);
    }
    return total;
}

}  // namespace

Stage1Objective stage1_objective(const DenoiserModel& model, const std::vector<Latent>& instance,
                                 const std::vector<Latent>& cls, const PromptEmbedding& instance_prompt,
                                 const PromptEmbedding& class_prompt, const NoiseSchedule& sched,
                                 std::uint64_t step_seed) {
    if (instance.empty()) throw InvalidInput("stage 1 needs at least one instance frame");
    if (cls.empty()) throw InvalidInput("stage 1 needs at least one class image");
    Stage1Objective o;
    o.instance_loss = mean_term(model, instance, instance_prompt, sched, step_seed, 0, &o.grads);
    o.class_loss = mean_term(model, cls, class_prompt, sched, step_seed, 1, &o.grads);
    o.loss = o.instance_loss + o.class_loss;
    return o;
}

LossResult stage2_objective(const DenoiserModel& model, const Latent& clip, const PromptEmbedding& prompt,
                            const NoiseSchedule& sched, std::uint64_t step_seed) {
    return ldm_loss(model, clip, prompt, sched, derive_seed(step_seed, 2, 0), GroupMask::stage2());
}

TrainResult train_stage1(DenoiserModel model, const TrainingBatch& batch, const NoiseSchedule& sched,
                         const TrainOptions& options) {
    if (batch.instance_frames.empty()) throw InvalidInput("stage 1 needs at least one instance frame");
    if (batch.class_images.empty()) throw InvalidInput("stage 1 needs at least one class image");
    if (options.steps < 0) throw InvalidInput("step count must be nonnegative");
    const auto instance = encode_each(batch.instance_frames, options.latent);
    const auto cls = encode_each(batch.class_images, options.latent);
    const auto pi = model.embed_prompt(batch.instance_prompt);
    const auto pc = model.embed_prompt(batch.class_prompt);

    TrainResult result{std::move(model), {}};
    for (int step = 0; step < options.steps; ++step) {
        // Token rows are re-read from the table every step.
        const auto pi_now = result.model.embed_prompt(pi.source_text);
        const auto pc_now = result.model.embed_prompt(pc.source_text);
        Stage1Objective o;
        try {
            o = stage1_objective(result.model, instance, cls, pi_now, pc_now, sched,
                                 derive_seed(options.seed, static_cast<std::uint64_t>(step), 7));
        } catch (const DivergenceError&) {
            throw DivergenceError("stage 1 loss is not finite", step);
        }
        result.loss_history.push_back(o.loss);
        sgd_step(result.model, o.grads, options.learning_rate);
        check_model_finite(result.model, step);
    }
    return result;
}

TrainResult train_stage2(DenoiserModel model, const FrameSequence& frames, const std::string& prompt,
                         const NoiseSchedule& sched, const TrainOptions& options) {
    if (options.steps < 0) throw InvalidInput("step count must be nonnegative");
    bool has_token = false;
    for (const auto& [name, value] : model.parameters()) has_token = has_token || group_of(name) == ParamGroup::Token;
    if (!has_token) throw InvalidInput("stage 2 requires a model with an instance token (run stage 1 first)");
    const auto clip = encode(frames, options.latent);
    const auto p = model.embed_prompt(prompt);

    TrainResult result{std::move(model), {}};
    for (int step = 0; step < options.steps; ++step) {
        LossResult r;
        try {
            r = stage2_objective(result.model, clip, p, sched,
                                 derive_seed(options.seed, static_cast<std::uint64_t>(step), 11));
        } catch (const DivergenceError&) {
            throw DivergenceError("stage 2 loss is not finite", step);
        }
        result.loss_history.push_back(r.loss);
        sgd_step(result.model, r.grads, options.learning_rate);
        check_model_finite(result.model, step);
    }
    return result;
}

double evaluate_stage1(const DenoiserModel& model, const TrainingBatch& batch, const NoiseSchedule& sched,
                       std::uint64_t seed, int draws, LatentMode latent) {
    const auto instance = encode_each(batch.instance_frames, latent);
    const auto cls = encode_each(batch.class_images, latent);
    const auto pi = model.embed_prompt(batch.instance_prompt);
    const auto pc = model.embed_prompt(batch.class_prompt);
    double total = 0.0;
    for (int d = 0; d < draws; ++d) {
        const auto s = derive_seed(seed, static_cast<std::uint64_t>(d), 101);
        total += mean_term(model, instance, pi, sched, s, 0, nullptr) + mean_term(model, cls, pc, sched, s, 1, nullptr);
    }
    return total / draws;
}

double evaluate_stage2(const DenoiserModel& model, const FrameSequence& frames, const std::string& prompt,
                       const NoiseSchedule& sched, std::uint64_t seed, int draws, LatentMode latent) {
    const auto clip = encode(frames, latent);
    const auto p = model.embed_prompt(prompt);
    double total = 0.0;
    for (int d = 0; d < draws; ++d)
        total += ldm_loss_value(model, clip, p, sched, derive_seed(seed, static_cast<std::uint64_t>(d), 103));
    return total / draws;
}

FrameSequence edit_moment(const DenoiserModel& model, const EditRequest& request, const NoiseSchedule& sched,
                          const EditOptions& options) {
    if (request.moment.empty()) throw InvalidInput("edit request has an empty moment");
    if (request.source_prompt.empty() || request.edit_prompt.empty())
        throw InvalidInput("edit prompts must be nonempty");
    if (request.inversion_steps < 1 || request.inversion_steps > sched.timesteps() ||
        request.sampling_steps < 1 || request.sampling_steps > sched.timesteps())
        throw InvalidInput("edit step counts must lie in [1, T]");

    const auto source = model.embed_prompt(options.null_prompt_inversion ? std::string_view{} : request.source_prompt);
    const auto target = model.embed_prompt(request.edit_prompt);
    // Validate the source prompt's tokens even when inverting unconditionally.
    if (options.null_prompt_inversion) (void)model.embed_prompt(request.source_prompt);

    const Latent z0 = encode(request.moment, options.latent);
    const Latent zT = ddim_invert(model, z0, source, sched, request.inversion_steps,
                                  DdimOptions{options.literal_inversion});
    const Latent edited = ddim_sample(model, zT, target, sched, request.sampling_steps);
    auto frames = decode(edited, options.latent);
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].set_index(request.moment[i].index());
    return frames;
}

}  // namespace forge
