#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "volfit/errors.hpp"
#include "volfit/market.hpp"
#include "volfit/slice_model.hpp"

namespace volfit {

/// Fit-error functionals: plain squared error, Black-Scholes-vega-weighted
/// squared error, and spread-scaled squared error. Sums over the grid, no
/// normalization by the number of points.
enum class RewardKind { Mse, Bmse, Smse };

inline constexpr double kSmseSpreadFloor = 1e-6;
inline constexpr double kModelVolFloor = 1e-10;

inline std::string to_string(RewardKind k) {
    switch (k) {
        case RewardKind::Mse: return "mse";
        case RewardKind::Bmse: return "bmse";
        default: return "smse";
    }
}

inline RewardKind parse_reward_kind(std::string_view name) {
    if (name == "mse") return RewardKind::Mse;
    if (name == "bmse") return RewardKind::Bmse;
    if (name == "smse") return RewardKind::Smse;
    throw ConfigError("unknown reward kind: " + std::string(name));
}

/// xi(theta) >= 0. Model vols are clamped at a tiny positive floor so an
/// inadmissible theta yields a large but finite error. The BMSE weight uses
/// the market mid vol, which keeps it independent of the action.
inline double fit_error(const ParamVector& theta, const QuoteSlice& quotes,
                        const MoneynessGrid& grid, ParamForm form, RewardKind kind,
                        double smse_spread_floor = kSmseSpreadFloor) {
    if (!all_finite(theta)) throw std::invalid_argument("parameter vector has non-finite entries");
    if (quotes.size() != grid.size())
        throw std::invalid_argument("quote slice does not match the grid");
    double xi = 0.0;
    for (int j = 0; j < grid.size(); ++j) {
        const double model =
            std::max(eval_point(theta, grid.kappas[j], grid.maturity, form), kModelVolFloor);
        const double diff = quotes.mid(j) - model;
        switch (kind) {
            case RewardKind::Mse:
                xi += diff * diff;
                break;
            case RewardKind::Bmse:
                xi += bs_vega(grid.kappas[j], quotes.mid(j), grid.maturity) * diff * diff;
                break;
            case RewardKind::Smse: {
                const double spread = std::max(quotes.spread(j), smse_spread_floor);
                if (!(spread > 0.0))
                    throw std::domain_error("zero spread in SMSE with the floor disabled");
                const double scaled = diff / spread;
                xi += scaled * scaled;
                break;
            }
        }
    }
    return xi;
}

/// r = -xi(theta); always <= 0, equal to 0 only at an exact fit.
inline double reward(const ParamVector& theta, const QuoteSlice& quotes, const MoneynessGrid& grid,
                     ParamForm form, RewardKind kind,
                     double smse_spread_floor = kSmseSpreadFloor) {
    return -fit_error(theta, quotes, grid, form, kind, smse_spread_floor);
}

} // namespace volfit
