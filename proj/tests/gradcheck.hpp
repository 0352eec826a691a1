#pragma once

// Central finite differences against analytic gradients.

#include "forge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace test_support {

struct GradCheck {
    double max_rel = 0.0;
    std::string worst;
    std::size_t entries = 0;
};

/// rel = |analytic - fd| / max(|analytic|, |fd|, floor), maximized over every
/// entry of every parameter in `analytic`. `loss` re-evaluates the objective
/// on the (temporarily perturbed) model.
template <typename LossFn>
GradCheck finite_difference_check(forge::DenoiserModel& model, const forge::Gradients& analytic, LossFn&& loss,
                                  double step = 1e-5, double floor = 1e-6) {
    GradCheck out;
    for (const auto& [name, g] : analytic) {
        auto& p = model.parameter(name);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double keep = p.data()[i];
            p.data()[i] = keep + step;
            const double up = loss(model);
            p.data()[i] = keep - step;
            const double down = loss(model);
            p.data()[i] = keep;
            const double fd = (up - down) / (2.0 * step);
            const double a = g.data()[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
            if (rel > out.max_rel) {
                out.max_rel = rel;
                out.worst = name + "[" + std::to_string(i) + "]";
            }
            ++out.entries;
        }
    }
    return out;
}

/// Adds N(0, scale^2) noise to every parameter so no gradient is trivially
/// zero (the temporal output projection starts at zero).
inline void jitter_parameters(forge::DenoiserModel& model, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    std::vector<std::string> names;
    for (const auto& [name, _] : model.parameters()) names.push_back(name);
    for (const auto& name : names) {
        auto& p = model.parameter(name);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += n(rng);
    }
}

inline forge::DenoiserModel tiny_model(std::uint64_t seed = 1) {
    forge::DenoiserConfig c;
    c.channels = 1;
    c.embed_dim = 3;
    c.text_dim = 3;
    c.seed = seed;
    return forge::DenoiserModel::create(c);
}

}  // namespace test_support
