#pragma once

// Reference implementations of the frame scores, written directly from the
// definitions and kept apart from the library code.

#include "forge/frames.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace test_support {

inline double ref_dissimilarity(const forge::Frame& a, const forge::Frame& b) {
    std::vector<double> ha(32, 0.0), hb(32, 0.0);
    const auto la = a.luma(), lb = b.luma();
    for (double v : la) ha[std::min(31, static_cast<int>(std::floor(v * 32)))] += 1.0 / la.size();
    for (double v : lb) hb[std::min(31, static_cast<int>(std::floor(v * 32)))] += 1.0 / lb.size();
    double inter = 0.0;
    for (int i = 0; i < 32; ++i) inter += std::min(ha[i], hb[i]);
    return 1.0 - inter;
}

inline double ref_clarity(const forge::Frame& f) {
    static const int kernel[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};
    std::vector<double> resp;
    for (int y = 1; y + 1 < f.height(); ++y)
        for (int x = 1; x + 1 < f.width(); ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) acc += kernel[dy + 1][dx + 1] * f.at(0, y + dy, x + dx);
            resp.push_back(acc);
        }
    const double mean = std::accumulate(resp.begin(), resp.end(), 0.0) / resp.size();
    double var = 0.0;
    for (double r : resp) var += (r - mean) * (r - mean);
    return var / resp.size();
}

// Direct evaluation of phi with per-component min-max scaling over the
// entries that exist.
inline std::vector<double> ref_phi(const forge::FrameSequence& fs, bool raw) {
    const std::size_t n = fs.size();
    std::vector<std::optional<double>> prev(n), next(n);
    std::vector<double> clar(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) prev[i] = ref_dissimilarity(fs[i], fs[i - 1]);
        if (i + 1 < n) next[i] = ref_dissimilarity(fs[i], fs[i + 1]);
        clar[i] = ref_clarity(fs[i]);
    }
    auto scale = [&](std::vector<std::optional<double>>& v) {
        if (raw) return;
        double lo = 1e300, hi = -1e300;
        for (auto& x : v)
            if (x) lo = std::min(lo, *x), hi = std::max(hi, *x);
        for (auto& x : v)
            if (x) x = hi > lo ? (*x - lo) / (hi - lo) : 0.0;
    };
    std::vector<std::optional<double>> c(clar.begin(), clar.end());
    scale(prev);
    scale(next);
    scale(c);
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = prev[i].value_or(0.0) + next[i].value_or(0.0) + *c[i];
    return phi;
}

inline std::vector<std::size_t> ref_select(const std::vector<double>& phi, std::size_t m) {
    std::vector<std::size_t> idx(phi.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return phi[a] > phi[b]; });
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace test_support
