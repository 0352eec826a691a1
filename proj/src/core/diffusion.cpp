#include "forge/diffusion.hpp"

#include "forge/digest.hpp"
#include "forge/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace forge {

// ---------------------------------------------------------------- schedule

NoiseSchedule::NoiseSchedule(int timesteps, double beta_start, double beta_end)
    : NoiseSchedule([&] {
          if (timesteps < 1) throw InvalidInput("schedule needs at least one timestep");
          std::vector<double> betas(static_cast<std::size_t>(timesteps));
          for (int i = 0; i < timesteps; ++i)
              betas[static_cast<std::size_t>(i)] =
                  timesteps == 1 ? beta_start
                                 : beta_start + (beta_end - beta_start) * i / (timesteps - 1);
          return betas;
      }()) {}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw InvalidInput("schedule needs at least one timestep");
    double running = 1.0;
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw InvalidInput("betas must lie in (0, 1)");
        alphas_.push_back(1.0 - b);
        running *= 1.0 - b;
        alpha_bars_.push_back(running);
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > timesteps()) throw InvalidInput("timestep out of range");
    return t == 0 ? 1.0 : alpha_bars_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 0 || t > timesteps()) throw InvalidInput("timestep out of range");
    return t == 0 ? 1.0 : alphas_[static_cast<std::size_t>(t - 1)];
}

// ------------------------------------------------------------------ latent

Latent::Latent(int f, int c, int h, int w, double fill) : frames(f), channels(c), height(h), width(w) {
    if (f <= 0 || c <= 0 || h <= 0 || w <= 0) throw InvalidInput("latent dimensions must be positive");
    values.assign(static_cast<std::size_t>(f) * c * h * w, fill);
}

ad::Matrix Latent::to_rows() const {
    const auto n = static_cast<Eigen::Index>(positions());
    ad::Matrix rows(frames * n, channels);
    for (int f = 0; f < frames; ++f)
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) rows(f * n + y * width + x, c) = at(f, c, y, x);
    return rows;
}

Latent Latent::from_rows(const ad::Matrix& rows, int frames, int height, int width) {
    Latent z(frames, static_cast<int>(rows.cols()), height, width);
    const auto n = static_cast<Eigen::Index>(z.positions());
    if (rows.rows() != frames * n) throw InvalidInput("row count does not match latent shape");
    for (int f = 0; f < frames; ++f)
        for (int c = 0; c < z.channels; ++c)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) z.at(f, c, y, x) = rows(f * n + y * width + x, c);
    return z;
}

Latent Latent::frame(int f) const {
    if (f < 0 || f >= frames) throw InvalidInput("frame index out of range");
    Latent out(1, channels, height, width);
    const std::size_t stride = static_cast<std::size_t>(channels) * height * width;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(f * stride), stride, out.values.begin());
    return out;
}

Latent encode(std::span<const Frame> frames, LatentMode mode) {
    validate_sequence(frames);
    const auto& first = frames.front();
    const int c = first.channels();
    if (mode == LatentMode::Identity) {
        Latent z(static_cast<int>(frames.size()), c, first.height(), first.width());
        for (std::size_t f = 0; f < frames.size(); ++f)
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < first.height(); ++y)
                    for (int x = 0; x < first.width(); ++x)
                        z.at(static_cast<int>(f), ch, y, x) = frames[f].at(ch, y, x);
        return z;
    }
    if (first.width() % 2 || first.height() % 2)
        throw InvalidInput("pooled latent requires even frame dimensions");
    Latent z(static_cast<int>(frames.size()), c, first.height() / 2, first.width() / 2);
    for (std::size_t f = 0; f < frames.size(); ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < z.height; ++y)
                for (int x = 0; x < z.width; ++x) {
                    const auto& fr = frames[f];
                    z.at(static_cast<int>(f), ch, y, x) =
                        0.25 * (fr.at(ch, 2 * y, 2 * x) + fr.at(ch, 2 * y, 2 * x + 1) +
                                fr.at(ch, 2 * y + 1, 2 * x) + fr.at(ch, 2 * y + 1, 2 * x + 1));
                }
    return z;
}

FrameSequence decode(const Latent& z, LatentMode mode) {
    if (z.size() == 0) throw InvalidInput("cannot decode an empty latent");
    if (z.channels != 1 && z.channels != 3) throw InvalidInput("latent must have 1 or 3 channels to decode");
    const int scale = mode == LatentMode::Pool2 ? 2 : 1;
    FrameSequence frames;
    frames.reserve(static_cast<std::size_t>(z.frames));
    for (int f = 0; f < z.frames; ++f) {
        Frame fr(z.width * scale, z.height * scale, z.channels, static_cast<std::size_t>(f));
        for (int c = 0; c < z.channels; ++c)
            for (int y = 0; y < fr.height(); ++y)
                for (int x = 0; x < fr.width(); ++x)
                    fr.at(c, y, x) = std::clamp(z.at(f, c, y / scale, x / scale), 0.0, 1.0);
        frames.push_back(std::move(fr));
    }
    return frames;
}

// ------------------------------------------------------------------ prompts

Eigen::VectorXd PromptEmbedding::pooled() const { return rows.colwise().mean().transpose(); }

bool is_special_token(std::string_view token) {
    return token.size() >= 2 && token.front() == '[' && token.back() == ']';
}

std::vector<std::string> tokenize_prompt(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            std::string raw(text.substr(i, j - i));
            for (auto& ch : raw) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (is_special_token(raw)) {
                tokens.push_back(raw);
            } else {
                auto keep = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) != 0; };
                auto b = std::find_if(raw.begin(), raw.end(), keep);
                auto e = std::find_if(raw.rbegin(), raw.rend(), keep).base();
                if (b < e) tokens.emplace_back(b, e);
            }
        }
        i = j;
    }
    return tokens;
}

Eigen::RowVectorXd hashed_embedding(std::string_view token, int dim) {
    std::mt19937_64 rng(fnv1a64(token));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::RowVectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    return v;
}

// ------------------------------------------------------------------- model

ParamGroup group_of(std::string_view name) {
    if (name.starts_with("spatial.")) return ParamGroup::Spatial;
    if (name.starts_with("temporal.")) return ParamGroup::Temporal;
    if (name.starts_with("token.")) return ParamGroup::Token;
    throw InvalidInput("parameter '" + std::string(name) + "' belongs to no group");
}

namespace {

constexpr const char* kSpatialSquare[] = {"spatial.time.w", "spatial.self.q", "spatial.self.k",
                                          "spatial.self.v", "spatial.self.o", "spatial.cross.q",
                                          "spatial.cross.o"};
constexpr const char* kTemporal[] = {"temporal.q", "temporal.k", "temporal.v", "temporal.o"};

ad::Matrix sinusoid_rows(int count, int dim, double base, double offset) {
    ad::Matrix out(count, dim);
    for (int r = 0; r < count; ++r)
        for (int d = 0; d < dim; ++d) {
            const double freq = std::pow(base, -static_cast<double>(d / 2 * 2) / dim);
            const double arg = (r + offset) * freq;
            out(r, d) = d % 2 == 0 ? std::sin(arg) : std::cos(arg);
        }
    return out;
}

ad::BoolMatrix block_mask(Eigen::Index frames, Eigen::Index positions, bool same_frame) {
    const auto n = frames * positions;
    ad::BoolMatrix mask(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            mask(i, j) = same_frame ? (i / positions == j / positions) : (i % positions == j % positions);
    return mask;
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

DenoiserModel DenoiserModel::create(const DenoiserConfig& config) {
    if (config.channels <= 0 || config.embed_dim <= 0 || config.text_dim <= 0)
        throw InvalidInput("denoiser dimensions must be positive");
    DenoiserModel m;
    m.channels_ = config.channels;
    m.embed_dim_ = config.embed_dim;
    m.text_dim_ = config.text_dim;
    const int c = config.channels, d = config.embed_dim, e = config.text_dim;

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](int rows, int cols) {
        ad::Matrix w(rows, cols);
        const double s = 1.0 / std::sqrt(static_cast<double>(rows));
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = s * normal(rng);
        return w;
    };

    m.params_["spatial.in.w"] = gaussian(c, d);
    m.params_["spatial.in.b"] = ad::Matrix::Zero(1, d);
    for (const char* name : kSpatialSquare) m.params_[name] = gaussian(d, d);
    m.params_["spatial.cross.k"] = gaussian(e, d);
    m.params_["spatial.cross.v"] = gaussian(e, d);
    m.params_["spatial.out.w"] = 0.1 * gaussian(d, c);
    m.params_["spatial.out.b"] = ad::Matrix::Zero(1, c);
    for (const char* name : kTemporal) m.params_[name] = gaussian(d, d);
    // Zero output projection: the temporal block starts as a pass-through.
    m.params_["temporal.o"].setZero();
    for (const auto& tok : config.instance_tokens) {
        if (!is_special_token(tok)) throw InvalidInput("instance token must be bracketed: " + tok);
        m.params_["token." + tok] = hashed_embedding(tok, e);
    }
    return m;
}

DenoiserModel DenoiserModel::from_parameters(std::map<std::string, ad::Matrix> params) {
    DenoiserModel m;
    auto need = [&](const std::string& name) -> const ad::Matrix& {
        auto it = params.find(name);
        if (it == params.end()) throw InvalidInput("checkpoint is missing parameter " + name);
        return it->second;
    };
    m.channels_ = static_cast<int>(need("spatial.in.w").rows());
    m.embed_dim_ = static_cast<int>(need("spatial.in.w").cols());
    m.text_dim_ = static_cast<int>(need("spatial.cross.k").rows());
    for (const auto& [name, value] : params) {
        (void)group_of(name);
        if (!value.allFinite()) throw InvalidInput("parameter " + name + " is not finite");
    }
    m.params_ = std::move(params);
    m.check_dimensions();
    return m;
}

void DenoiserModel::check_dimensions() const {
    const int c = channels_, d = embed_dim_, e = text_dim_;
    auto expect = [&](const std::string& name, Eigen::Index r, Eigen::Index cols) {
        const auto& p = parameter(name);
        if (p.rows() != r || p.cols() != cols) throw InvalidInput("parameter " + name + " has the wrong shape");
    };
    expect("spatial.in.w", c, d);
    expect("spatial.in.b", 1, d);
    for (const char* name : kSpatialSquare) expect(name, d, d);
    expect("spatial.cross.k", e, d);
    expect("spatial.cross.v", e, d);
    expect("spatial.out.w", d, c);
    expect("spatial.out.b", 1, c);
    for (const char* name : kTemporal) expect(name, d, d);
    for (const auto& [name, value] : params_)
        if (group_of(name) == ParamGroup::Token && (value.rows() != 1 || value.cols() != e))
            throw InvalidInput("token embedding " + name + " has the wrong shape");
}

ad::Matrix& DenoiserModel::parameter(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidInput("no parameter named " + name);
    return it->second;
}

const ad::Matrix& DenoiserModel::parameter(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidInput("no parameter named " + name);
    return it->second;
}

std::size_t DenoiserModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.size());
    return n;
}

std::size_t DenoiserModel::parameter_count(ParamGroup group) const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_)
        if (group_of(name) == group) n += static_cast<std::size_t>(p.size());
    return n;
}

bool DenoiserModel::has_token(const std::string& token) const { return params_.contains("token." + token); }

PromptEmbedding DenoiserModel::embed_prompt(std::string_view text) const {
    PromptEmbedding p;
    p.source_text = std::string(text);
    p.tokens = tokenize_prompt(text);
    if (p.tokens.empty()) {
        // Null prompt: a single zero row.
        p.learnable.emplace_back();
        p.rows = ad::Matrix::Zero(1, text_dim_);
        return p;
    }
    p.rows.resize(static_cast<Eigen::Index>(p.tokens.size()), text_dim_);
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
        const auto& tok = p.tokens[i];
        if (is_special_token(tok)) {
            if (!has_token(tok)) throw UnknownTokenError(tok);
            p.learnable.push_back(tok);
            p.rows.row(static_cast<Eigen::Index>(i)) = parameter("token." + tok);
        } else {
            p.learnable.emplace_back();
            p.rows.row(static_cast<Eigen::Index>(i)) = hashed_embedding(tok, text_dim_);
        }
    }
    return p;
}

ad::Var DenoiserModel::forward(ad::Tape& tape, const Latent& zt, int t, const PromptEmbedding& prompt,
                               GroupMask trainable, std::map<std::string, ad::Var>& bound) const {
    if (zt.channels != channels_) throw InvalidInput("latent channel count does not match the model");
    if (prompt.dim() != text_dim_) throw InvalidInput("prompt dimension does not match the model");
    const auto n = static_cast<Eigen::Index>(zt.positions());
    const auto frames = static_cast<Eigen::Index>(zt.frames);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(embed_dim_));

    auto p = [&](const std::string& name) {
        auto it = bound.find(name);
        if (it != bound.end()) return it->second;
        const ad::Var v = tape.leaf(parameter(name), trainable.contains(group_of(name)));
        bound.emplace(name, v);
        return v;
    };
    auto attend = [&](ad::Var q_in, ad::Var kv_in, const std::string& prefix, const ad::BoolMatrix* mask,
                      const std::string& kname, const std::string& vname) {
        const auto q = tape.matmul(q_in, p(prefix + "q"));
        const auto k = tape.matmul(kv_in, p(kname));
        const auto v = tape.matmul(kv_in, p(vname));
        const auto weights = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt_d), mask);
        return tape.matmul(tape.matmul(weights, v), p(prefix + "o"));
    };

    const auto x = tape.constant(zt.to_rows());
    const auto temb = tape.constant(sinusoid_rows(1, embed_dim_, 1000.0, static_cast<double>(t)));
    const auto time_row = tape.matmul(temb, p("spatial.time.w"));
    const auto pre = tape.add_row(tape.add_row(tape.matmul(x, p("spatial.in.w")), p("spatial.in.b")), time_row);
    ad::Matrix pe = sinusoid_rows(static_cast<int>(n), embed_dim_, 100.0, 0.0).replicate(frames, 1);
    const auto h0 = tape.add(tape.tanh(pre), tape.constant(std::move(pe)));

    // Spatial self-attention within each frame.
    ad::BoolMatrix frame_mask;
    if (frames > 1) frame_mask = block_mask(frames, n, true);
    const auto h1 = tape.add(h0, attend(h0, h0, "spatial.self.", frames > 1 ? &frame_mask : nullptr,
                                       "spatial.self.k", "spatial.self.v"));

    // Cross-attention from positions to prompt tokens.
    std::vector<ad::Var> rows;
    for (Eigen::Index i = 0; i < prompt.rows.rows(); ++i) {
        const auto& key = prompt.learnable[static_cast<std::size_t>(i)];
        if (key.empty()) rows.push_back(tape.constant(prompt.rows.row(i)));
        else rows.push_back(p("token." + key));
    }
    const auto ptok = tape.vstack(rows);
    const auto h2 = tape.add(h1, attend(h1, ptok, "spatial.cross.", nullptr, "spatial.cross.k", "spatial.cross.v"));

    // Temporal attention across frames at each position. A single frame
    // attends only to itself, so the softmax reduces to the identity.
    ad::Var h3;
    if (frames > 1) {
        const auto pos_mask = block_mask(frames, n, false);
        h3 = tape.add(h2, attend(h2, h2, "temporal.", &pos_mask, "temporal.k", "temporal.v"));
    } else {
        h3 = tape.add(h2, tape.matmul(tape.matmul(h2, p("temporal.v")), p("temporal.o")));
    }
    return tape.add_row(tape.matmul(h3, p("spatial.out.w")), p("spatial.out.b"));
}

Latent DenoiserModel::predict(const Latent& zt, int t, const PromptEmbedding& prompt) const {
    ad::Tape tape;
    std::map<std::string, ad::Var> bound;
    const auto out = forward(tape, zt, t, prompt, GroupMask{false, false, false}, bound);
    return Latent::from_rows(tape.value(out), zt.frames, zt.height, zt.width);
}

// -------------------------------------------------------------- operations

Latent forward_noise(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& sched) {
    if (!z0.same_shape(eps)) throw InvalidInput("forward_noise: eps shape differs from z0");
    if (t < 1 || t > sched.timesteps()) throw InvalidInput("forward_noise: timestep out of range");
    const double a = std::sqrt(sched.alpha_bar(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar(t));
    Latent out = z0;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * z0.values[i] + b * eps.values[i];
    return out;
}

NoiseDraw draw_noise(const Latent& shape, const NoiseSchedule& sched, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_t(1, sched.timesteps());
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseDraw d;
    d.timestep = pick_t(rng);
    d.eps = shape;
    for (auto& v : d.eps.values) v = normal(rng);
    return d;
}

LossResult ldm_loss(const DenoiserModel& model, const Latent& z0, const PromptEmbedding& prompt,
                    const NoiseSchedule& sched, const NoiseDraw& draw, GroupMask trainable) {
    const Latent zt = forward_noise(z0, draw.timestep, draw.eps, sched);
    ad::Tape tape;
    std::map<std::string, ad::Var> bound;
    const auto out = model.forward(tape, zt, draw.timestep, prompt, trainable, bound);
    const ad::Matrix target = draw.eps.to_rows();
    const auto loss = tape.mse(out, target);

    LossResult r;
    r.timestep = draw.timestep;
    r.loss = tape.value(loss)(0, 0);
    if (!std::isfinite(r.loss)) throw DivergenceError("non-finite diffusion loss", -1);

    const ad::Matrix diff = tape.value(out) - target;
    const auto rows_per_frame = static_cast<Eigen::Index>(z0.positions());
    for (int f = 0; f < z0.frames; ++f)
        r.per_frame.push_back(diff.middleRows(f * rows_per_frame, rows_per_frame).squaredNorm() /
                              static_cast<double>(rows_per_frame * z0.channels));

    tape.backward(loss);
    for (const auto& [name, value] : model.parameters()) {
        if (!trainable.contains(group_of(name))) continue;
        auto it = bound.find(name);
        if (it != bound.end() && tape.grad(it->second).size() != 0) r.grads[name] = tape.grad(it->second);
        else r.grads[name] = ad::Matrix::Zero(value.rows(), value.cols());
    }
    return r;
}

LossResult ldm_loss(const DenoiserModel& model, const Latent& z0, const PromptEmbedding& prompt,
                    const NoiseSchedule& sched, std::uint64_t seed, GroupMask trainable) {
    return ldm_loss(model, z0, prompt, sched, draw_noise(z0, sched, seed), trainable);
}

double ldm_loss_value(const NoisePredictor& predictor, const Latent& z0, const PromptEmbedding& prompt,
                      const NoiseSchedule& sched, std::uint64_t seed) {
    const auto draw = draw_noise(z0, sched, seed);
    const Latent zt = forward_noise(z0, draw.timestep, draw.eps, sched);
    const Latent pred = predictor.predict(zt, draw.timestep, prompt);
    if (!pred.same_shape(zt)) throw InvalidInput("predictor returned a latent of the wrong shape");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = draw.eps.values[i] - pred.values[i];
        sum += d * d;
    }
    const double loss = sum / static_cast<double>(pred.size());
    if (!std::isfinite(loss)) throw DivergenceError("non-finite diffusion loss", -1);
    return loss;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 0 || steps > T) throw InvalidInput("DDIM steps must lie in [0, T]");
    std::vector<int> taus(static_cast<std::size_t>(steps) + 1, 0);
    for (int k = 1; k <= steps; ++k)
        taus[static_cast<std::size_t>(k)] =
            static_cast<int>(static_cast<long long>(k) * T / steps);
    return taus;
}

Latent ddim_sample(const NoisePredictor& model, const Latent& zT, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, int steps) {
    const auto taus = ddim_timesteps(sched.timesteps(), steps);
    Latent z = zT;
    for (int k = steps; k >= 1; --k) {
        const int t = taus[static_cast<std::size_t>(k)];
        const int t_prev = taus[static_cast<std::size_t>(k - 1)];
        const Latent eps = model.predict(z, t, prompt);
        const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x0 = (z.values[i] - std::sqrt(1.0 - ab) * eps.values[i]) / std::sqrt(ab);
            z.values[i] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps.values[i];
        }
        if (!all_finite(z.values)) throw DivergenceError("non-finite latent during DDIM sampling", k);
    }
    return z;
}

Latent ddim_invert(const NoisePredictor& model, const Latent& z0, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, int steps, DdimOptions options) {
    const auto taus = ddim_timesteps(sched.timesteps(), steps);
    Latent z = z0;
    for (int k = 1; k <= steps; ++k) {
        const int t = taus[static_cast<std::size_t>(k)];
        const int t_prev = taus[static_cast<std::size_t>(k - 1)];
        const Latent eps = model.predict(z, t, prompt);
        if (options.literal_inversion) {
            const double a = sched.alpha(t), a_prev = sched.alpha(t_prev);
            const double coef = std::sqrt(1.0 - a) - std::sqrt((1.0 - a) / a_prev);
            for (std::size_t i = 0; i < z.size(); ++i)
                z.values[i] = std::sqrt(a) * z.values[i] + coef * eps.values[i];
        } else {
            const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double x0 = (z.values[i] - std::sqrt(1.0 - ab_prev) * eps.values[i]) / std::sqrt(ab_prev);
                z.values[i] = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps.values[i];
            }
        }
        if (!all_finite(z.values)) throw DivergenceError("non-finite latent during DDIM inversion", k);
    }
    return z;
}

void sgd_step(DenoiserModel& model, const Gradients& grads, double learning_rate) {
    for (const auto& [name, g] : grads) {
        auto& p = model.parameter(name);
        if (p.rows() != g.rows() || p.cols() != g.cols()) throw InvalidInput("gradient shape mismatch for " + name);
        p -= learning_rate * g;
    }
}

std::string parameter_digest(const DenoiserModel& model, ParamGroup group) {
    Sha256 h;
    for (const auto& [name, value] : model.parameters()) {
        if (group_of(name) != group) continue;
        h.update(name).update_pod(value.rows()).update_pod(value.cols());
        h.update(std::string_view(reinterpret_cast<const char*>(value.data()),
                                  static_cast<std::size_t>(value.size()) * sizeof(double)));
    }
    return h.hex();
}

}  // namespace forge
