#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "volfit/errors.hpp"

namespace volfit {

/// Number of slice coefficients; also the action dimension of the fitting MDP.
inline constexpr int kParamCount = 3;

/// Coefficients of the volatility slice parametrization.
using ParamVector = std::array<double, kParamCount>;

/// Closed form used to turn a ParamVector into a slice of implied vols.
///
/// Quadratic:   sigma(k) = t0 + t1*k + t2*k^2
/// SviReduced:  sigma(k) = sqrt(max(w(k), eps) / T),
///              w(k) = t0 + t1*(t2*k + sqrt(k^2 + s^2)),  s fixed below
enum class ParamForm { Quadratic, SviReduced };

inline constexpr double kSviWingSmoothing = 0.1;
inline constexpr double kVarianceFloor = 1e-10;

inline std::string to_string(ParamForm form) {
    return form == ParamForm::Quadratic ? "quadratic" : "svi_reduced";
}

inline ParamForm parse_param_form(std::string_view name) {
    if (name == "quadratic") return ParamForm::Quadratic;
    if (name == "svi_reduced") return ParamForm::SviReduced;
    throw ConfigError("unknown param form: " + std::string(name));
}

/// Log-moneyness grid of one maturity slice. ATM is kappa = 0.
struct MoneynessGrid {
    std::vector<double> kappas;
    double maturity = 1.0;

    int size() const { return static_cast<int>(kappas.size()); }

    void validate() const {
        if (kappas.empty()) throw std::invalid_argument("moneyness grid is empty");
        if (static_cast<int>(kappas.size()) < kParamCount)
            throw std::invalid_argument("moneyness grid needs at least as many points as parameters");
        for (std::size_t j = 1; j < kappas.size(); ++j)
            if (!(kappas[j] > kappas[j - 1]))
                throw std::invalid_argument("moneyness grid must be strictly increasing");
        if (!(maturity > 0.0)) throw std::invalid_argument("maturity must be positive");
    }
};

inline bool all_finite(const ParamVector& theta) {
    return std::isfinite(theta[0]) && std::isfinite(theta[1]) && std::isfinite(theta[2]);
}

/// Model vol at a single log-moneyness point. May be negative for the
/// quadratic form; callers that need a positive vol clamp explicitly.
inline double eval_point(const ParamVector& theta, double kappa, double maturity, ParamForm form) {
    if (form == ParamForm::Quadratic)
        return theta[0] + theta[1] * kappa + theta[2] * kappa * kappa;
    const double s = kSviWingSmoothing;
    const double w = theta[0] + theta[1] * (theta[2] * kappa + std::sqrt(kappa * kappa + s * s));
    return std::sqrt(std::max(w, kVarianceFloor) / maturity);
}

inline std::vector<double> eval_slice(const ParamVector& theta, const MoneynessGrid& grid,
                                      ParamForm form) {
    if (!all_finite(theta)) throw std::invalid_argument("parameter vector has non-finite entries");
    if (grid.kappas.empty()) throw std::invalid_argument("moneyness grid is empty");
    std::vector<double> vols(grid.kappas.size());
    for (std::size_t j = 0; j < grid.kappas.size(); ++j)
        vols[j] = eval_point(theta, grid.kappas[j], grid.maturity, form);
    return vols;
}

/// d sigma / d theta at one grid point. Quadratic: (1, k, k^2).
inline ParamVector eval_point_gradient(const ParamVector& theta, double kappa, double maturity,
                                       ParamForm form) {
    if (form == ParamForm::Quadratic) return {1.0, kappa, kappa * kappa};
    const double s = kSviWingSmoothing;
    const double wing = theta[2] * kappa + std::sqrt(kappa * kappa + s * s);
    const double w = theta[0] + theta[1] * wing;
    if (w <= kVarianceFloor) return {0.0, 0.0, 0.0};
    const double sigma = std::sqrt(w / maturity);
    const double dsig_dw = 1.0 / (2.0 * sigma * maturity);
    return {dsig_dw, dsig_dw * wing, dsig_dw * theta[1] * kappa};
}

/// A ParamVector is admissible when it is finite and its slice is positive
/// on the whole grid. Inadmissible vectors are still accepted by the
/// environment; the reward sees the clamped evaluation.
inline bool is_admissible(const ParamVector& theta, const MoneynessGrid& grid, ParamForm form) {
    if (!all_finite(theta)) return false;
    for (double kappa : grid.kappas)
        if (!(eval_point(theta, kappa, grid.maturity, form) > 0.0)) return false;
    return true;
}

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Black-Scholes vega per unit notional with forward = 1 and zero rates:
/// vega = n(d1) * sqrt(T), d1 = (-kappa + sigma^2 T / 2) / (sigma sqrt(T)).
inline double bs_vega(double kappa, double sigma, double maturity) {
    if (!(sigma > 0.0)) throw std::invalid_argument("vega requires a positive vol");
    if (!(maturity > 0.0)) throw std::invalid_argument("vega requires a positive maturity");
    const double sqrt_t = std::sqrt(maturity);
    const double d1 = (-kappa + 0.5 * sigma * sigma * maturity) / (sigma * sqrt_t);
    return norm_pdf(d1) * sqrt_t;
}

} // namespace volfit
