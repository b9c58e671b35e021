#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "volfit/errors.hpp"
#include "volfit/market.hpp"
#include "volfit/rewards.hpp"
#include "volfit/slice_model.hpp"

namespace volfit {

/// Flattened observation (bid_j, ask_j)_{j=1..n} followed by the prior theta;
/// length 2n + K.
using EnvState = std::vector<double>;

/// Bump applied to the slice coefficients, clipped per coordinate.
using Action = std::array<double, kParamCount>;

inline constexpr double kDefaultActionBound = 0.5;
inline constexpr double kDefaultFlatLevel = 0.2;

struct Transition {
    EnvState state;
    Action action{};
    double reward = 0.0;
    EnvState next_state;
    bool done = false;
};

/// Per-coordinate running mean / population std (Welford). Stats move only
/// when the caller passes update = true; evaluation episodes keep them frozen.
class StateNormalizer {
  public:
    static constexpr double kStdFloor = 1e-6;

    StateNormalizer() = default;
    explicit StateNormalizer(int dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    int dim() const { return static_cast<int>(mean_.size()); }
    std::int64_t count() const { return count_; }
    const std::vector<double>& mean() const { return mean_; }

    double std_dev(int i) const {
        return count_ > 0 ? std::sqrt(m2_[i] / static_cast<double>(count_)) : 0.0;
    }

    void observe(const EnvState& s) {
        if (mean_.empty()) {
            mean_.assign(s.size(), 0.0);
            m2_.assign(s.size(), 0.0);
        }
        if (s.size() != mean_.size()) throw ShapeError("normalizer dimension mismatch");
        ++count_;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double delta = s[i] - mean_[i];
            mean_[i] += delta / static_cast<double>(count_);
            m2_[i] += delta * (s[i] - mean_[i]);
        }
    }

    EnvState normalize(const EnvState& s) const {
        if (count_ == 0) return EnvState(s.size(), 0.0);
        if (s.size() != mean_.size()) throw ShapeError("normalizer dimension mismatch");
        EnvState out(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            out[i] = (s[i] - mean_[i]) / std::max(std_dev(static_cast<int>(i)), kStdFloor);
        return out;
    }

    /// Fold the state in first when updating, then scale with the new stats.
    EnvState apply(const EnvState& s, bool update) {
        if (update) observe(s);
        return normalize(s);
    }

    void restore(std::vector<double> mean, std::vector<double> m2, std::int64_t count) {
        if (mean.size() != m2.size()) throw ShapeError("normalizer state size mismatch");
        mean_ = std::move(mean);
        m2_ = std::move(m2);
        count_ = count;
    }

    const std::vector<double>& m2() const { return m2_; }

  private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::int64_t count_ = 0;
};

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;
};

/// The fitting MDP. One instance per worker; instances are cheap values.
///
/// Episode shape by scenario: static ends after one step, sequential after M
/// steps on a frozen slice, quasi-dynamic draws a fresh slice after every
/// step. The reward of a step always scores theta + clip(action) against the
/// quotes visible when the action was taken.
class FittingEnv {
  public:
    FittingEnv(MarketConfig market, RewardKind reward_kind, ParamForm form, std::uint64_t seed,
               double action_bound = kDefaultActionBound, double flat_level = kDefaultFlatLevel)
        : market_(std::move(market), seed),
          reward_kind_(reward_kind),
          form_(form),
          action_bound_(action_bound),
          flat_level_(flat_level) {}

    int state_dim() const { return 2 * market_.config().grid.size() + kParamCount; }
    int episode_length() const { return market_.config().steps(); }
    const MoneynessGrid& grid() const { return market_.config().grid; }
    const MarketConfig& market_config() const { return market_.config(); }
    RewardKind reward_kind() const { return reward_kind_; }
    ParamForm form() const { return form_; }
    double action_bound() const { return action_bound_; }
    const ParamVector& theta() const { return theta_; }
    const QuoteSlice& quotes() const { return quotes_; }
    int step_index() const { return step_; }

    void reseed(std::uint64_t seed) { market_.reseed(seed); }

    EnvState reset() {
        theta_ = {flat_level_, 0.0, 0.0};
        quotes_ = market_.initial();
        step_ = 0;
        done_ = false;
        return observe();
    }

    Action clip(const Action& a) const {
        Action out;
        for (int i = 0; i < kParamCount; ++i)
            out[i] = std::clamp(a[i], -action_bound_, action_bound_);
        return out;
    }

    /// Reward the bump would earn against the current quotes, without
    /// advancing the episode. Used for the deterministic-policy reward r^D.
    double counterfactual_reward(const Action& a) const {
        if (done_) throw LifecycleError("episode is finished");
        const Action c = clip(a);
        ParamVector t = theta_;
        for (int i = 0; i < kParamCount; ++i) t[i] += c[i];
        return reward(t, quotes_, grid(), form_, reward_kind_);
    }

    StepResult step(const Action& a) {
        if (done_) throw LifecycleError("step called on a finished episode");
        const Action c = clip(a);
        for (int i = 0; i < kParamCount; ++i) theta_[i] += c[i];
        const double r = reward(theta_, quotes_, grid(), form_, reward_kind_);
        ++step_;
        done_ = step_ >= episode_length();
        if (!done_ && market_.config().scenario == ScenarioKind::QuasiDynamic)
            quotes_ = market_.next(quotes_);
        return {observe(), r, done_};
    }

    EnvState observe() const {
        EnvState s;
        s.reserve(state_dim());
        for (int j = 0; j < quotes_.size(); ++j) {
            s.push_back(quotes_.bid[j]);
            s.push_back(quotes_.ask[j]);
        }
        for (int i = 0; i < kParamCount; ++i) s.push_back(theta_[i]);
        return s;
    }

  private:
    MarketProcess market_;
    RewardKind reward_kind_;
    ParamForm form_;
    double action_bound_;
    double flat_level_;
    ParamVector theta_{kDefaultFlatLevel, 0.0, 0.0};
    QuoteSlice quotes_;
    int step_ = 0;
    bool done_ = true; // reset() is required before stepping
};

} // namespace volfit
