#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "volfit/rewards.hpp"

namespace volfit {

struct BenchOptions {
    long max_evaluations = 5000; // per restart
    double diameter_tol = 1e-10;
    double initial_step = 0.1;
};

struct BenchResult {
    ParamVector theta{};
    double reward = -std::numeric_limits<double>::infinity();
    long evaluations = 0;
};

namespace detail {

/// Standard Nelder-Mead on a K-dimensional objective with reflection 1,
/// expansion 2, contraction 0.5, shrink 0.5. Fully deterministic.
inline std::pair<ParamVector, double> nelder_mead(
    const std::function<double(const ParamVector&)>& objective, const ParamVector& start,
    const BenchOptions& opts, long& evaluations) {
    constexpr int kDim = kParamCount;
    std::array<ParamVector, kDim + 1> simplex;
    std::array<double, kDim + 1> value;
    simplex[0] = start;
    for (int i = 0; i < kDim; ++i) {
        simplex[i + 1] = start;
        simplex[i + 1][i] += opts.initial_step;
    }
    for (int i = 0; i <= kDim; ++i) {
        value[i] = objective(simplex[i]);
        ++evaluations;
    }

    const auto order = [&] {
        std::array<int, kDim + 1> idx{};
        for (int i = 0; i <= kDim; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return value[a] < value[b]; });
        std::array<ParamVector, kDim + 1> s2;
        std::array<double, kDim + 1> v2;
        for (int i = 0; i <= kDim; ++i) {
            s2[i] = simplex[idx[i]];
            v2[i] = value[idx[i]];
        }
        simplex = s2;
        value = v2;
    };

    const auto diameter = [&] {
        double d = 0.0;
        for (int i = 1; i <= kDim; ++i)
            for (int c = 0; c < kDim; ++c) d = std::max(d, std::abs(simplex[i][c] - simplex[0][c]));
        return d;
    };

    long used = 0;
    while (used < opts.max_evaluations) {
        order();
        if (diameter() < opts.diameter_tol) break;

        ParamVector centroid{};
        for (int i = 0; i < kDim; ++i)
            for (int c = 0; c < kDim; ++c) centroid[c] += simplex[i][c] / kDim;

        const auto along = [&](double coef) {
            ParamVector p;
            for (int c = 0; c < kDim; ++c)
                p[c] = centroid[c] + coef * (simplex[kDim][c] - centroid[c]);
            return p;
        };

        const ParamVector reflected = along(-1.0);
        const double fr = objective(reflected);
        ++evaluations;
        ++used;
        if (fr < value[0]) {
            const ParamVector expanded = along(-2.0);
            const double fe = objective(expanded);
            ++evaluations;
            ++used;
            if (fe < fr) {
                simplex[kDim] = expanded;
                value[kDim] = fe;
            } else {
                simplex[kDim] = reflected;
                value[kDim] = fr;
            }
            continue;
        }
        if (fr < value[kDim - 1]) {
            simplex[kDim] = reflected;
            value[kDim] = fr;
            continue;
        }
        const ParamVector contracted = along(fr < value[kDim] ? -0.5 : 0.5);
        const double fc = objective(contracted);
        ++evaluations;
        ++used;
        if (fc < std::min(fr, value[kDim])) {
            simplex[kDim] = contracted;
            value[kDim] = fc;
            continue;
        }
        for (int i = 1; i <= kDim; ++i) {
            for (int c = 0; c < kDim; ++c)
                simplex[i][c] = simplex[0][c] + 0.5 * (simplex[i][c] - simplex[0][c]);
            value[i] = objective(simplex[i]);
            ++evaluations;
        }
        used += kDim;
    }
    order();
    return {simplex[0], value[0]};
}

inline const std::array<ParamVector, 8>& bench_starts() {
    static const std::array<ParamVector, 8> starts = {{
        {0.20, 0.0, 0.0},
        {0.30, 0.0, 0.0},
        {0.12, 0.0, 0.0},
        {0.20, -0.30, 0.0},
        {0.20, 0.30, 0.0},
        {0.20, 0.0, -0.40},
        {0.20, 0.0, 0.40},
        {0.25, -0.15, 0.20},
    }};
    return starts;
}

} // namespace detail

/// Classical-optimizer benchmark: minimize xi(theta) with Nelder-Mead from a
/// fixed set of restarts around the flat prior. No randomness anywhere, so
/// the result is a deterministic function of the quotes.
inline BenchResult benchmark_fit(const QuoteSlice& quotes, const MoneynessGrid& grid,
                                 RewardKind kind, ParamForm form,
                                 const BenchOptions& opts = {}) {
    quotes.validate();
    const auto objective = [&](const ParamVector& theta) {
        return fit_error(theta, quotes, grid, form, kind);
    };
    BenchResult best;
    for (const ParamVector& start : detail::bench_starts()) {
        auto [theta, xi] = detail::nelder_mead(objective, start, opts, best.evaluations);
        if (-xi > best.reward) {
            best.theta = theta;
            best.reward = -xi;
        }
    }
    return best;
}

struct GridOracleBox {
    std::array<double, 2> level{0.10, 0.40};
    std::array<double, 2> slope{-0.50, 0.50};
    std::array<double, 2> curvature{-0.80, 0.80};
};

/// Brute-force sweep over a theta box; a lower bound on the achievable
/// reward used to validate benchmark_fit in tests.
inline BenchResult grid_oracle(const QuoteSlice& quotes, const MoneynessGrid& grid,
                               RewardKind kind, ParamForm form, int resolution,
                               const GridOracleBox& box = {}) {
    if (resolution < 10) throw std::invalid_argument("grid oracle needs resolution >= 10");
    quotes.validate();
    const auto node = [resolution](const std::array<double, 2>& range, int i) {
        return range[0] + (range[1] - range[0]) * static_cast<double>(i) / (resolution - 1);
    };
    BenchResult best;
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j)
            for (int k = 0; k < resolution; ++k) {
                const ParamVector theta = {node(box.level, i), node(box.slope, j),
                                           node(box.curvature, k)};
                const double r = -fit_error(theta, quotes, grid, form, kind);
                ++best.evaluations;
                if (r > best.reward) {
                    best.reward = r;
                    best.theta = theta;
                }
            }
    return best;
}

} // namespace volfit
