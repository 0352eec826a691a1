#pragma once

#include "forge/autograd.hpp"
#include "forge/frames.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Linear-beta variance schedule over timesteps 1..T. Index 0 of the
/// accessors below denotes the clean state (alpha_bar = 1).
class NoiseSchedule {
public:
    NoiseSchedule(int timesteps, double beta_start, double beta_end);
    explicit NoiseSchedule(std::vector<double> betas);

    int timesteps() const noexcept { return static_cast<int>(betas_.size()); }
    std::span<const double> betas() const noexcept { return betas_; }
    std::span<const double> alphas() const noexcept { return alphas_; }
    std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }

    /// Cumulative product for t in [0, T]; 1 at t = 0.
    double alpha_bar(int t) const;
    /// Per-step alpha for t in [0, T]; 1 at t = 0.
    double alpha(int t) const;

private:
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

/// Dense (frames, channels, height, width) array.
struct Latent {
    int frames = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Latent() = default;
    Latent(int f, int c, int h, int w, double fill = 0.0);

    std::size_t size() const noexcept { return values.size(); }
    std::size_t positions() const noexcept { return static_cast<std::size_t>(height) * width; }
    bool same_shape(const Latent& o) const noexcept {
        return frames == o.frames && channels == o.channels && height == o.height && width == o.width;
    }
    double& at(int f, int c, int y, int x) { return values[offset(f, c, y, x)]; }
    double at(int f, int c, int y, int x) const { return values[offset(f, c, y, x)]; }

    /// (frames * H * W) x channels, frame-major rows.
    ad::Matrix to_rows() const;
    static Latent from_rows(const ad::Matrix& rows, int frames, int height, int width);
    Latent frame(int f) const;

private:
    std::size_t offset(int f, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(f) * channels + c) * height + y) * width + x;
    }
};

enum class LatentMode { Identity, Pool2 };

/// Identity by default; Pool2 averages 2x2 blocks (even dimensions only).
Latent encode(std::span<const Frame> frames, LatentMode mode = LatentMode::Identity);
/// Values are clamped to [0, 1]; Pool2 upsamples by pixel repetition.
FrameSequence decode(const Latent& z, LatentMode mode = LatentMode::Identity);

/// Tokenized prompt: one row per token. `learnable[i]` names the token-table
/// entry backing row i, or is empty for hashed fixed embeddings.
struct PromptEmbedding {
    std::string source_text;
    std::vector<std::string> tokens;
    std::vector<std::string> learnable;
    ad::Matrix rows;

    int dim() const noexcept { return static_cast<int>(rows.cols()); }
    /// Mean over token rows.
    Eigen::VectorXd pooled() const;
};

/// Lowercased whitespace tokens with surrounding punctuation stripped.
/// Bracketed tokens such as "[v]" are kept verbatim.
std::vector<std::string> tokenize_prompt(std::string_view text);
bool is_special_token(std::string_view token);

/// Deterministic unit-scale embedding seeded by the token's FNV-1a hash.
Eigen::RowVectorXd hashed_embedding(std::string_view token, int dim);

enum class ParamGroup { Spatial, Temporal, Token };

struct GroupMask {
    bool spatial = true;
    bool temporal = true;
    bool token = true;

    bool contains(ParamGroup g) const noexcept {
        return g == ParamGroup::Spatial ? spatial : g == ParamGroup::Temporal ? temporal : token;
    }
    static GroupMask all() { return {}; }
    static GroupMask stage1() { return {true, false, true}; }
    static GroupMask stage2() { return {false, true, false}; }
};

ParamGroup group_of(std::string_view param_name);

using Gradients = std::map<std::string, ad::Matrix>;

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Latent predict(const Latent& zt, int t, const PromptEmbedding& prompt) const = 0;
};

struct DenoiserConfig {
    int channels = 1;
    int embed_dim = 32;
    int text_dim = 32;
    std::vector<std::string> instance_tokens{"[v]"};
    std::uint64_t seed = 0;
};

/// Toy noise predictor: per-frame self-attention over spatial positions,
/// cross-attention to prompt tokens, then attention over the frame axis at
/// each spatial position. Parameters are named "spatial.*", "temporal.*" or
/// "token.<token>".
class DenoiserModel : public NoisePredictor {
public:
    static DenoiserModel create(const DenoiserConfig& config);
    /// Builds a model from named parameters, inferring dimensions from shapes.
    static DenoiserModel from_parameters(std::map<std::string, ad::Matrix> params);

    int channels() const noexcept { return channels_; }
    int embed_dim() const noexcept { return embed_dim_; }
    int text_dim() const noexcept { return text_dim_; }

    const std::map<std::string, ad::Matrix>& parameters() const noexcept { return params_; }
    ad::Matrix& parameter(const std::string& name);
    const ad::Matrix& parameter(const std::string& name) const;
    std::size_t parameter_count() const;
    std::size_t parameter_count(ParamGroup group) const;
    bool has_token(const std::string& token) const;

    /// Throws UnknownTokenError for bracketed tokens missing from the table.
    PromptEmbedding embed_prompt(std::string_view text) const;

    Latent predict(const Latent& zt, int t, const PromptEmbedding& prompt) const override;

    /// Records the forward pass on `tape`. Parameters of groups in `trainable`
    /// are bound as gradient-carrying leaves into `bound`.
    ad::Var forward(ad::Tape& tape, const Latent& zt, int t, const PromptEmbedding& prompt,
                    GroupMask trainable, std::map<std::string, ad::Var>& bound) const;

private:
    DenoiserModel() = default;
    void check_dimensions() const;

    int channels_ = 0;
    int embed_dim_ = 0;
    int text_dim_ = 0;
    std::map<std::string, ad::Matrix> params_;
};

/// sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps, for t in [1, T].
Latent forward_noise(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& sched);

struct LossResult {
    double loss = 0.0;
    std::vector<double> per_frame;
    int timestep = 0;
    Gradients grads;
};

/// Draws t ~ U{1..T} and eps ~ N(0, I) from `seed`, as done by ldm_loss.
struct NoiseDraw {
    int timestep = 0;
    Latent eps;
};
NoiseDraw draw_noise(const Latent& shape, const NoiseSchedule& sched, std::uint64_t seed);

/// Mean squared error between eps and the model's prediction at z_t, with
/// gradients for every parameter in `trainable`.
LossResult ldm_loss(const DenoiserModel& model, const Latent& z0, const PromptEmbedding& prompt,
                    const NoiseSchedule& sched, std::uint64_t seed,
                    GroupMask trainable = GroupMask::all());
LossResult ldm_loss(const DenoiserModel& model, const Latent& z0, const PromptEmbedding& prompt,
                    const NoiseSchedule& sched, const NoiseDraw& draw,
                    GroupMask trainable = GroupMask::all());
/// Value-only loss for an arbitrary predictor.
double ldm_loss_value(const NoisePredictor& predictor, const Latent& z0, const PromptEmbedding& prompt,
                      const NoiseSchedule& sched, std::uint64_t seed);

/// Evenly spaced timesteps 0 = tau_0 < ... < tau_steps = T.
std::vector<int> ddim_timesteps(int T, int steps);

struct DdimOptions {
    /// Use the per-step-alpha inversion update rather than the
    /// standard cumulative form. Only affects ddim_invert.
    bool literal_inversion = false;
};

/// Deterministic (eta = 0) DDIM from z_T to an estimate of z_0.
Latent ddim_sample(const NoisePredictor& model, const Latent& zT, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, int steps);
/// Runs the DDIM update in increasing timestep order, mapping z_0 to z_T.
Latent ddim_invert(const NoisePredictor& model, const Latent& z0, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, int steps, DdimOptions options = {});

/// Plain SGD on the parameters present in `grads`.
void sgd_step(DenoiserModel& model, const Gradients& grads, double learning_rate);

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model);
DenoiserModel load_checkpoint(const std::filesystem::path& path);

/// SHA-256 over names, shapes and values of one parameter group.
std::string parameter_digest(const DenoiserModel& model, ParamGroup group);

}  // namespace forge
