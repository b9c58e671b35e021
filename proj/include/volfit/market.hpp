#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "volfit/errors.hpp"
#include "volfit/slice_model.hpp"

namespace volfit {

/// Bid/ask implied vols on the moneyness grid at one time step.
struct QuoteSlice {
    int step = 0;
    std::vector<double> bid;
    std::vector<double> ask;

    int size() const { return static_cast<int>(bid.size()); }
    double mid(int j) const { return 0.5 * (bid[j] + ask[j]); }
    double spread(int j) const { return ask[j] - bid[j]; }

    std::vector<double> mids() const {
        std::vector<double> m(bid.size());
        for (std::size_t j = 0; j < bid.size(); ++j) m[j] = 0.5 * (bid[j] + ask[j]);
        return m;
    }

    void validate() const {
        if (bid.size() != ask.size()) throw std::invalid_argument("bid/ask size mismatch");
        for (std::size_t j = 0; j < bid.size(); ++j) {
            if (!(bid[j] > 0.0)) throw std::invalid_argument("bid vol must be positive");
            if (!(ask[j] >= bid[j])) throw std::invalid_argument("ask must be >= bid");
        }
    }
};

enum class ScenarioKind { Static, Sequential, QuasiDynamic };
enum class MarketShape { Skew, HighSmile, InverseSmile, Custom };
enum class TemporalMode { Iid, RandomWalk };

inline std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::Static: return "static";
        case ScenarioKind::Sequential: return "sequential";
        default: return "quasi_dynamic";
    }
}

inline ScenarioKind parse_scenario(std::string_view name) {
    if (name == "static") return ScenarioKind::Static;
    if (name == "sequential") return ScenarioKind::Sequential;
    if (name == "quasi_dynamic") return ScenarioKind::QuasiDynamic;
    throw ConfigError("unknown scenario: " + std::string(name));
}

inline std::string to_string(MarketShape s) {
    switch (s) {
        case MarketShape::Skew: return "skew";
        case MarketShape::HighSmile: return "high_smile";
        case MarketShape::InverseSmile: return "inverse_smile";
        default: return "custom";
    }
}

inline MarketShape parse_shape(std::string_view name) {
    if (name == "skew") return MarketShape::Skew;
    if (name == "high_smile") return MarketShape::HighSmile;
    if (name == "inverse_smile") return MarketShape::InverseSmile;
    if (name == "custom") return MarketShape::Custom;
    throw ConfigError("unknown market shape: " + std::string(name));
}

inline std::string to_string(TemporalMode m) {
    return m == TemporalMode::Iid ? "iid" : "random_walk";
}

inline TemporalMode parse_temporal_mode(std::string_view name) {
    if (name == "iid") return TemporalMode::Iid;
    if (name == "random_walk") return TemporalMode::RandomWalk;
    throw ConfigError("unknown temporal mode: " + std::string(name));
}

struct ShapeNode {
    double kappa;
    double mid;
};

/// Built-in mid-vol tables. Skew is monotone decreasing, high_smile convex
/// with its minimum at the money, inverse_smile concave with its maximum
/// at the money. None of them is exactly representable by a 3-coefficient
/// quadratic on the default grid, so the benchmark error stays nonzero.
inline const std::vector<ShapeNode>& shape_table(MarketShape shape) {
    static const std::vector<ShapeNode> skew = {
        {-0.2, 0.2800}, {-0.1, 0.2560}, {0.0, 0.2200}, {0.1, 0.1960}, {0.2, 0.1800}};
    static const std::vector<ShapeNode> high_smile = {
        {-0.2, 0.2540}, {-0.1, 0.2455}, {0.0, 0.2400}, {0.1, 0.2455}, {0.2, 0.2540}};
    static const std::vector<ShapeNode> inverse_smile = {
        {-0.2, 0.1490}, {-0.1, 0.1570}, {0.0, 0.1620}, {0.1, 0.1570}, {0.2, 0.1490}};
    switch (shape) {
        case MarketShape::Skew: return skew;
        case MarketShape::HighSmile: return high_smile;
        case MarketShape::InverseSmile: return inverse_smile;
        default: throw ConfigError("custom shape has no built-in table");
    }
}

/// Piecewise-linear lookup with flat extrapolation beyond the table ends.
inline double table_mid(const std::vector<ShapeNode>& table, double kappa) {
    if (kappa <= table.front().kappa) return table.front().mid;
    if (kappa >= table.back().kappa) return table.back().mid;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (kappa <= table[i].kappa) {
            const double t = (kappa - table[i - 1].kappa) / (table[i].kappa - table[i - 1].kappa);
            return table[i - 1].mid + t * (table[i].mid - table[i - 1].mid);
        }
    }
    return table.back().mid;
}

/// Gaussian-copula marginals for the quasi-dynamic scenario: per grid point
/// a normal mid and a normal spread, joined by one correlation matrix over
/// the stacked vector (mids_1..n, spreads_1..n).
struct CopulaParams {
    std::vector<double> mid_mean;
    std::vector<double> mid_std;
    std::vector<double> spread_mean;
    std::vector<double> spread_std;
    std::vector<double> correlation; // (2n x 2n) row-major; empty means identity
    TemporalMode temporal_mode = TemporalMode::Iid;

    void validate(int n) const {
        const auto check = [n](const std::vector<double>& v, const char* what) {
            if (static_cast<int>(v.size()) != n)
                throw ConfigError(std::string("copula ") + what + " must match the grid size");
        };
        check(mid_mean, "mid means");
        check(mid_std, "mid std devs");
        check(spread_mean, "spread means");
        check(spread_std, "spread std devs");
        for (double s : mid_std)
            if (s < 0.0) throw ConfigError("copula std devs must be non-negative");
        for (double s : spread_std)
            if (s < 0.0) throw ConfigError("copula std devs must be non-negative");
        const int d = 2 * n;
        if (!correlation.empty()) {
            if (static_cast<int>(correlation.size()) != d * d)
                throw ConfigError("correlation matrix must be (2n x 2n)");
            for (int i = 0; i < d; ++i) {
                if (std::abs(correlation[i * d + i] - 1.0) > 1e-9)
                    throw ConfigError("correlation matrix must have a unit diagonal");
                for (int j = 0; j < d; ++j)
                    if (std::abs(correlation[i * d + j] - correlation[j * d + i]) > 1e-9)
                        throw ConfigError("correlation matrix must be symmetric");
            }
        }
    }
};

inline MoneynessGrid default_grid() {
    return MoneynessGrid{{-0.2, -0.1, 0.0, 0.1, 0.2}, 1.0};
}

/// Synthetic stand-ins for the copula calibrations; mids follow the skew
/// table, spreads are wide or tight, and neighbouring strikes co-move.
inline CopulaParams copula_preset(std::string_view name, const MoneynessGrid& grid) {
    const int n = grid.size();
    CopulaParams p;
    p.mid_mean.resize(n);
    const auto& table = shape_table(MarketShape::Skew);
    for (int j = 0; j < n; ++j) p.mid_mean[j] = table_mid(table, grid.kappas[j]);

    double mid_rho = 0.0, spread_rho = 0.0;
    if (name == "wide_spread_stock") {
        p.mid_std.assign(n, 0.004);
        p.spread_mean.assign(n, 0.020);
        p.spread_std.assign(n, 0.004);
        mid_rho = 0.90;
        spread_rho = 0.50;
    } else if (name == "tight_spread_stock") {
        p.mid_std.assign(n, 0.002);
        p.spread_mean.assign(n, 0.004);
        p.spread_std.assign(n, 0.001);
        mid_rho = 0.95;
        spread_rho = 0.40;
    } else {
        throw ConfigError("unknown copula preset: " + std::string(name));
    }

    const int d = 2 * n;
    p.correlation.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            p.correlation[i * d + j] = std::pow(mid_rho, std::abs(i - j));
            p.correlation[(n + i) * d + (n + j)] = std::pow(spread_rho, std::abs(i - j));
        }
    return p;
}

struct MarketConfig {
    ScenarioKind scenario = ScenarioKind::Static;
    MarketShape shape = MarketShape::Skew;
    MoneynessGrid grid = default_grid();
    int episode_steps = 50;
    double quoted_spread = 0.01;
    std::vector<double> custom_mids; // used when shape == Custom
    CopulaParams copula;             // used when scenario == QuasiDynamic
    double spread_floor = 5e-4;
    double vol_floor = 0.01;

    int steps() const { return scenario == ScenarioKind::Static ? 1 : episode_steps; }

    void validate() const {
        grid.validate();
        if (episode_steps < 1) throw ConfigError("episode length must be at least 1");
        if (scenario != ScenarioKind::QuasiDynamic) {
            if (!(quoted_spread > 0.0)) throw ConfigError("quoted spread must be positive");
            if (shape == MarketShape::Custom &&
                custom_mids.size() != grid.kappas.size())
                throw ConfigError("custom mids must match the grid size");
        } else {
            copula.validate(grid.size());
            if (!(spread_floor > 0.0) || !(vol_floor > 0.0))
                throw ConfigError("quote floors must be positive");
        }
    }
};

/// The fixed slice used by the static and sequential scenarios.
inline QuoteSlice gen_static(const MarketConfig& cfg) {
    cfg.validate();
    if (cfg.scenario == ScenarioKind::QuasiDynamic)
        throw ConfigError("gen_static requires a static or sequential scenario");
    const int n = cfg.grid.size();
    QuoteSlice q;
    q.bid.resize(n);
    q.ask.resize(n);
    for (int j = 0; j < n; ++j) {
        const double mid = cfg.shape == MarketShape::Custom
                               ? cfg.custom_mids[j]
                               : table_mid(shape_table(cfg.shape), cfg.grid.kappas[j]);
        if (!(mid > 0.5 * cfg.quoted_spread))
            throw ConfigError("mid too small for the configured spread");
        q.bid[j] = mid - 0.5 * cfg.quoted_spread;
        q.ask[j] = mid + 0.5 * cfg.quoted_spread;
    }
    q.validate();
    return q;
}

/// Factor F with Sigma ~= F F^T. Mild indefiniteness is repaired by clipping
/// negative eigenvalues at zero; anything below -kPsdRepairTol is rejected.
class CopulaFactor {
  public:
    static constexpr double kPsdRepairTol = 0.05;

    CopulaFactor() = default;

    CopulaFactor(const std::vector<double>& correlation, int dim) {
        Eigen::MatrixXd sigma(dim, dim);
        if (correlation.empty()) {
            sigma.setIdentity();
        } else {
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) sigma(i, j) = correlation[i * dim + j];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
        if (eig.info() != Eigen::Success) throw ConfigError("correlation eigendecomposition failed");
        if (eig.eigenvalues().minCoeff() < -kPsdRepairTol)
            throw ConfigError("correlation matrix is not PSD beyond repair tolerance");
        Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        factor_ = eig.eigenvectors() * clipped.asDiagonal();
    }

    int dim() const { return static_cast<int>(factor_.rows()); }

    /// z = F g with g standard normal, drawn component by component.
    std::vector<double> draw(std::mt19937_64& rng) const {
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd g(factor_.cols());
        for (int i = 0; i < g.size(); ++i) g(i) = normal(rng);
        Eigen::VectorXd z = factor_ * g;
        return std::vector<double>(z.data(), z.data() + z.size());
    }

  private:
    Eigen::MatrixXd factor_;
};

/// One quasi-dynamic step. With iid temporal mode each step is a fresh draw
/// from the marginals; with random_walk the draw perturbs the previous slice.
/// Mids are floored, spreads are floored and capped so quotes never cross.
inline QuoteSlice step_quasi_dynamic(const MarketConfig& cfg, const CopulaFactor& factor,
                                     std::mt19937_64& rng, const QuoteSlice* prev) {
    const int n = cfg.grid.size();
    const auto& cop = cfg.copula;
    const std::vector<double> z = factor.draw(rng);
    const bool walk = cop.temporal_mode == TemporalMode::RandomWalk && prev != nullptr;

    QuoteSlice q;
    q.step = prev ? prev->step + 1 : 0;
    q.bid.resize(n);
    q.ask.resize(n);
    for (int j = 0; j < n; ++j) {
        double mid = walk ? prev->mid(j) + cop.mid_std[j] * z[j]
                          : cop.mid_mean[j] + cop.mid_std[j] * z[j];
        mid = std::max(mid, cfg.vol_floor);
        double spread = walk ? prev->spread(j) + cop.spread_std[j] * z[n + j]
                             : cop.spread_mean[j] + cop.spread_std[j] * z[n + j];
        spread = std::max(spread, cfg.spread_floor);
        spread = std::min(spread, 2.0 * (mid - 1e-4));
        q.bid[j] = mid - 0.5 * spread;
        q.ask[j] = mid + 0.5 * spread;
    }
    return q;
}

/// Owns the RNG stream of one episode's quote path. Distinct episodes use
/// distinct generators; a generator is never shared across workers.
class MarketProcess {
  public:
    MarketProcess(MarketConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
        cfg_.validate();
        if (cfg_.scenario == ScenarioKind::QuasiDynamic)
            factor_ = CopulaFactor(cfg_.copula.correlation, 2 * cfg_.grid.size());
    }

    const MarketConfig& config() const { return cfg_; }

    void reseed(std::uint64_t seed) { rng_.seed(seed); }

    QuoteSlice initial() {
        if (cfg_.scenario != ScenarioKind::QuasiDynamic) return gen_static(cfg_);
        return step_quasi_dynamic(cfg_, factor_, rng_, nullptr);
    }

    QuoteSlice next(const QuoteSlice& prev) {
        if (cfg_.scenario != ScenarioKind::QuasiDynamic) {
            QuoteSlice q = prev;
            q.step = prev.step + 1;
            return q;
        }
        return step_quasi_dynamic(cfg_, factor_, rng_, &prev);
    }

  private:
    MarketConfig cfg_;
    std::mt19937_64 rng_;
    CopulaFactor factor_;
};

} // namespace volfit
