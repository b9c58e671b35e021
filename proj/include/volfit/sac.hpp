#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "volfit/detail/batch.hpp"
#include "volfit/env.hpp"
#include "volfit/nn.hpp"
#include "volfit/replay.hpp"

namespace volfit {

struct SacConfig {
    double actor_lr = 2.5e-5;
    double critic_lr = 2.5e-4;
    double alpha_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.001;
    double action_bound = kDefaultActionBound;
    int batch_size = 64;
    int hidden_units = 256;
    int hidden_layers = 2;
    double entropy_target = -static_cast<double>(kParamCount);
    double alpha_init = 0.2;
    double log_std_min = -20.0;
    double log_std_max = 2.0;
    double reward_threshold = std::numeric_limits<double>::infinity();
    bool threshold_on_step = true;
};

struct SacEpisodeLog {
    std::vector<double> rewards;
    std::vector<double> det_rewards;
    std::vector<double> q1_losses;
    std::vector<double> q2_losses;
    std::vector<double> policy_losses;
    std::vector<double> alphas;
    std::vector<double> entropy_estimates;
    std::vector<std::uint8_t> learning;
};

/// Soft actor-critic with twin critics and target copies, a squashed
/// diagonal-Gaussian policy, and temperature learned in log space against
/// the entropy target -K.
class SacAgent {
  public:
    SacAgent(int state_dim, const SacConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), log_alpha_(std::log(cfg.alpha_init)), norm_(state_dim) {
        std::vector<int> actor_dims{state_dim};
        std::vector<int> critic_dims{state_dim + kParamCount};
        for (int i = 0; i < cfg.hidden_layers; ++i) {
            actor_dims.push_back(cfg.hidden_units);
            critic_dims.push_back(cfg.hidden_units);
        }
        actor_dims.push_back(2 * kParamCount); // mean head then log-std head
        critic_dims.push_back(1);
        actor_ = nn::Mlp::xavier(actor_dims, nn::Activation::ReLU, nn::OutputHead::Linear, 1.0,
                                 seed);
        q1_ = nn::Mlp::xavier(critic_dims, nn::Activation::ReLU, nn::OutputHead::Linear, 1.0,
                              seed + 1);
        q2_ = nn::Mlp::xavier(critic_dims, nn::Activation::ReLU, nn::OutputHead::Linear, 1.0,
                              seed + 2);
        target_q1_ = q1_;
        target_q2_ = q2_;
    }

    /// Wire in caller-built networks (target critics start as copies).
    static SacAgent from_networks(const SacConfig& cfg, nn::Mlp actor, nn::Mlp q1, nn::Mlp q2) {
        SacAgent agent(actor.input_dim(), cfg, 0);
        agent.actor_ = std::move(actor);
        agent.q1_ = std::move(q1);
        agent.q2_ = std::move(q2);
        agent.target_q1_ = agent.q1_;
        agent.target_q2_ = agent.q2_;
        return agent;
    }

    const SacConfig& config() const { return cfg_; }
    double alpha() const { return std::exp(log_alpha_); }
    double log_alpha() const { return log_alpha_; }
    bool learning() const { return learning_; }
    void stop_learning() { learning_ = false; }
    StateNormalizer& normalizer() { return norm_; }
    const StateNormalizer& normalizer() const { return norm_; }
    const nn::Mlp& actor() const { return actor_; }
    const nn::Mlp& q1() const { return q1_; }
    const nn::Mlp& q2() const { return q2_; }

    /// Evaluation-mode action: a = a_max tanh(mu(s)).
    Action act_mean(const EnvState& s) const {
        const std::vector<double> out = actor_.forward(norm_.normalize(s));
        Action a;
        for (int i = 0; i < kParamCount; ++i) a[i] = cfg_.action_bound * std::tanh(out[i]);
        return a;
    }

    /// Reparametrized draw a = a_max tanh(mu + eps sigma) together with
    /// log pi(a|s), including the tanh and scale change-of-variables terms.
    std::pair<Action, double> sample_action(const EnvState& s, std::mt19937_64& rng) const {
        const std::vector<double> out = actor_.forward(norm_.normalize(s));
        std::normal_distribution<double> normal(0.0, 1.0);
        Action a;
        double logp = 0.0;
        for (int i = 0; i < kParamCount; ++i) {
            const double log_std = clamp_log_std(out[kParamCount + i]);
            const double sigma = std::exp(log_std);
            const double eps = normal(rng);
            const double u = out[i] + eps * sigma;
            a[i] = cfg_.action_bound * std::tanh(u);
            logp += gauss_log_density(eps, log_std) - log1m_tanh_sq(u) -
                    std::log(cfg_.action_bound);
        }
        return {a, logp};
    }

    /// Soft Bellman backup with fresh next-state actions from the current
    /// policy, the min of the two target critics, and the entropy bonus;
    /// terminal transitions drop the bootstrap. One Adam step per critic.
    std::pair<double, double> critic_update(const std::vector<Transition>& batch,
                                            std::mt19937_64& rng) {
        const auto view = detail::make_batch_view(batch, norm_);
        const int b = view.size;
        const double a_cur = alpha();

        const nn::Mlp::Mat next_out = actor_.forward_batch(view.next_states);
        PolicyDraw draw = draw_from_output(next_out, rng);
        const nn::Mlp::Mat next_sa = detail::concat_rows(view.next_states, draw.actions);
        const nn::Mlp::Mat tq1 = target_q1_.forward_batch(next_sa);
        const nn::Mlp::Mat tq2 = target_q2_.forward_batch(next_sa);

        std::vector<double> target(b);
        for (int i = 0; i < b; ++i) {
            const double soft_q = std::min(tq1.at(0, i), tq2.at(0, i)) - a_cur * draw.logp[i];
            // rewards are <= 0 and the squashed policy's entropy is <= 0
            // for action bounds <= 0.5, so soft returns are <= 0 as well
            target[i] = std::min(0.0, view.rewards[i] +
                                          (view.done[i] ? 0.0 : cfg_.gamma * soft_q));
        }

        const nn::Mlp::Mat sa = detail::concat_rows(view.states, view.actions);
        const auto fit_one = [&](nn::Mlp& critic) {
            nn::Mlp::Cache cache;
            const nn::Mlp::Mat q = critic.forward_batch(sa, &cache);
            nn::Mlp::Mat dq(1, b);
            double loss = 0.0;
            for (int i = 0; i < b; ++i) {
                const double diff = q.at(0, i) - target[i];
                loss += diff * diff;
                dq.at(0, i) = 2.0 * diff / b;
            }
            nn::Mlp::Grads grads;
            critic.backward_batch(cache, dq, &grads);
            critic.adam_step(grads, {cfg_.critic_lr});
            return loss / b;
        };
        return {fit_one(q1_), fit_one(q2_)};
    }

    struct ActorUpdateResult {
        double policy_loss = 0.0;
        double mean_logp = 0.0;
    };

    /// J_pi = E[alpha log pi - min(Q1,Q2)] over the batch with the action
    /// reparametrized; gradients flow through the per-sample argmin critic
    /// only. Pure evaluation: nothing is updated, so finite-difference
    /// oracles can probe the gradient.
    double policy_objective(const std::vector<Transition>& batch, std::mt19937_64& rng,
                            nn::Mlp::Grads* grads = nullptr,
                            double* mean_logp_out = nullptr) const {
        const auto view = detail::make_batch_view(batch, norm_);
        const int b = view.size;
        const double a_cur = alpha();

        nn::Mlp::Cache actor_cache;
        const nn::Mlp::Mat out = actor_.forward_batch(view.states, grads ? &actor_cache : nullptr);
        PolicyDraw draw = draw_from_output(out, rng);

        const nn::Mlp::Mat sa = detail::concat_rows(view.states, draw.actions);
        nn::Mlp::Cache q1_cache, q2_cache;
        const nn::Mlp::Mat qa = q1_.forward_batch(sa, grads ? &q1_cache : nullptr);
        const nn::Mlp::Mat qb = q2_.forward_batch(sa, grads ? &q2_cache : nullptr);

        double loss = 0.0;
        double mean_logp = 0.0;
        nn::Mlp::Mat dqa(1, b), dqb(1, b);
        for (int i = 0; i < b; ++i) {
            const double qmin = std::min(qa.at(0, i), qb.at(0, i));
            loss += a_cur * draw.logp[i] - qmin;
            mean_logp += draw.logp[i];
            if (qa.at(0, i) <= qb.at(0, i))
                dqa.at(0, i) = -1.0 / b;
            else
                dqb.at(0, i) = -1.0 / b;
        }
        loss /= b;
        mean_logp /= b;
        if (mean_logp_out) *mean_logp_out = mean_logp;
        if (!grads) return loss;

        nn::Mlp::Mat d_sa_1, d_sa_2;
        q1_.backward_batch(q1_cache, dqa, nullptr, &d_sa_1);
        q2_.backward_batch(q2_cache, dqb, nullptr, &d_sa_2);

        const int sdim = view.states.rows;
        nn::Mlp::Mat d_out(2 * kParamCount, b);
        for (int k = 0; k < kParamCount; ++k) {
            for (int i = 0; i < b; ++i) {
                const double da =
                    d_sa_1.at(sdim + k, i) + d_sa_2.at(sdim + k, i); // dLoss/da (one is zero)
                const double t = draw.tanh_u.at(k, i);
                const double d_u = da * cfg_.action_bound * (1.0 - t * t) +
                                   (a_cur / b) * 2.0 * t;
                d_out.at(k, i) = d_u;
                d_out.at(kParamCount + k, i) =
                    draw.clamped.at(k, i) != 0.0
                        ? 0.0
                        : d_u * draw.eps.at(k, i) * draw.sigma.at(k, i) - a_cur / b;
            }
        }
        actor_.backward_batch(actor_cache, d_out, grads);
        return loss;
    }

    /// One Adam descent step on J_pi; the critics are read, never updated.
    ActorUpdateResult actor_update(const std::vector<Transition>& batch, std::mt19937_64& rng) {
        nn::Mlp::Grads grads;
        double mean_logp = 0.0;
        const double loss = policy_objective(batch, rng, &grads, &mean_logp);
        actor_.adam_step(grads, {cfg_.actor_lr});
        return {loss, mean_logp};
    }

    /// Dual ascent on the temperature: one Adam step on
    /// J(alpha) = E[-alpha (log pi + H_bar)] with respect to log alpha.
    double temperature_update(double mean_logp) {
        const double grad = -alpha() * (mean_logp + cfg_.entropy_target);
        log_alpha_ += alpha_adam_.delta(grad, {cfg_.alpha_lr});
        return alpha();
    }

    void update_targets() {
        nn::polyak_update(target_q1_, q1_, cfg_.tau);
        nn::polyak_update(target_q2_, q2_, cfg_.tau);
    }

    SacEpisodeLog train_episode(FittingEnv& env, ReplayBuffer& buffer, std::mt19937_64& rng) {
        SacEpisodeLog log;
        EnvState s = env.reset();
        for (int t = 0; t < env.episode_length(); ++t) {
            if (learning_) norm_.observe(s);
            const Action det = act_mean(s);
            const double det_reward = env.counterfactual_reward(det);
            const auto [a, logp] = sample_action(s, rng);
            const StepResult res = env.step(a);
            buffer.store({s, a, res.reward, res.state, res.done});

            double j1 = std::numeric_limits<double>::quiet_NaN();
            double j2 = j1, jpi = j1, entropy = j1;
            // updates begin once the buffer has been pre-filled to capacity
            if (learning_ && buffer.full()) {
                if (const auto batch = buffer.sample(cfg_.batch_size, rng)) {
                    std::tie(j1, j2) = critic_update(*batch, rng);
                    const ActorUpdateResult res_a = actor_update(*batch, rng);
                    jpi = res_a.policy_loss;
                    entropy = -res_a.mean_logp;
                    temperature_update(res_a.mean_logp);
                    update_targets();
                }
            }
            if (cfg_.threshold_on_step && det_reward > cfg_.reward_threshold) learning_ = false;

            log.rewards.push_back(res.reward);
            log.det_rewards.push_back(det_reward);
            log.q1_losses.push_back(j1);
            log.q2_losses.push_back(j2);
            log.policy_losses.push_back(jpi);
            log.alphas.push_back(alpha());
            log.entropy_estimates.push_back(entropy);
            log.learning.push_back(learning_ ? 1 : 0);
            s = res.state;
        }
        return log;
    }

    void note_eval_mean(double mean_reward) {
        if (mean_reward > cfg_.reward_threshold) learning_ = false;
    }

    /// Monte-Carlo entropy over sampled actions at the given states.
    double entropy_estimate(const std::vector<EnvState>& states, int draws_per_state,
                            std::mt19937_64& rng) const {
        double total = 0.0;
        long count = 0;
        for (const EnvState& s : states)
            for (int d = 0; d < draws_per_state; ++d) {
                total += -sample_action(s, rng).second;
                ++count;
            }
        return count > 0 ? total / count : 0.0;
    }

    std::uint64_t param_hash() const {
        std::uint64_t h = 1469598103934665603ull;
        const auto mix = [&h](std::span<const double> p) {
            for (double v : p) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, sizeof bits);
                h ^= bits;
                h *= 1099511628211ull;
            }
        };
        mix(actor_.params());
        mix(q1_.params());
        mix(q2_.params());
        mix(target_q1_.params());
        mix(target_q2_.params());
        const double la = log_alpha_;
        mix(std::span<const double>(&la, 1));
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = "sac";
        j["actor"] = actor_.to_json();
        j["q1"] = q1_.to_json();
        j["q2"] = q2_.to_json();
        j["target_q1"] = target_q1_.to_json();
        j["target_q2"] = target_q2_.to_json();
        j["log_alpha"] = log_alpha_;
        j["normalizer"] = {{"mean", norm_.mean()},
                           {"m2", norm_.m2()},
                           {"count", norm_.count()}};
        j["learning"] = learning_;
        return j;
    }

    static SacAgent from_json(const nlohmann::json& j, const SacConfig& cfg) {
        if (j.value("kind", "") != "sac") throw CheckpointError("not a sac checkpoint");
        nn::Mlp actor = nn::Mlp::from_json(j.at("actor"));
        SacAgent agent(actor.input_dim(), cfg, 0);
        agent.actor_ = std::move(actor);
        agent.q1_ = nn::Mlp::from_json(j.at("q1"));
        agent.q2_ = nn::Mlp::from_json(j.at("q2"));
        agent.target_q1_ = nn::Mlp::from_json(j.at("target_q1"));
        agent.target_q2_ = nn::Mlp::from_json(j.at("target_q2"));
        agent.log_alpha_ = j.at("log_alpha").get<double>();
        agent.norm_.restore(j.at("normalizer").at("mean").get<std::vector<double>>(),
                            j.at("normalizer").at("m2").get<std::vector<double>>(),
                            j.at("normalizer").at("count").get<std::int64_t>());
        agent.learning_ = j.value("learning", false);
        return agent;
    }

  private:
    struct PolicyDraw {
        nn::Mlp::Mat actions; // a_max tanh(u), K x B
        nn::Mlp::Mat tanh_u;
        nn::Mlp::Mat eps;
        nn::Mlp::Mat sigma;
        nn::Mlp::Mat clamped; // 1 where the log-std hit a clamp bound
        std::vector<double> logp;
    };

    double clamp_log_std(double v) const {
        return std::clamp(v, cfg_.log_std_min, cfg_.log_std_max);
    }

    static double softplus(double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }

    /// log(1 - tanh(u)^2) evaluated without catastrophic cancellation.
    static double log1m_tanh_sq(double u) {
        const double au = std::abs(u);
        return 2.0 * (std::numbers::ln2 - au - softplus(-2.0 * au));
    }

    static double gauss_log_density(double eps, double log_std) {
        return -0.5 * eps * eps - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
    }

    /// Batched reparametrized draw from the actor output matrix
    /// (means in rows 0..K-1, log-stds in rows K..2K-1).
    PolicyDraw draw_from_output(const nn::Mlp::Mat& out, std::mt19937_64& rng) const {
        const int b = out.cols;
        PolicyDraw d;
        d.actions = nn::Mlp::Mat(kParamCount, b);
        d.tanh_u = nn::Mlp::Mat(kParamCount, b);
        d.eps = nn::Mlp::Mat(kParamCount, b);
        d.sigma = nn::Mlp::Mat(kParamCount, b);
        d.clamped = nn::Mlp::Mat(kParamCount, b);
        d.logp.assign(b, 0.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < b; ++i) {
            for (int k = 0; k < kParamCount; ++k) {
                const double raw = out.at(kParamCount + k, i);
                const double log_std = clamp_log_std(raw);
                const double sigma = std::exp(log_std);
                const double eps = normal(rng);
                const double u = out.at(k, i) + eps * sigma;
                const double t = std::tanh(u);
                d.actions.at(k, i) = cfg_.action_bound * t;
                d.tanh_u.at(k, i) = t;
                d.eps.at(k, i) = eps;
                d.sigma.at(k, i) = sigma;
                d.clamped.at(k, i) = raw == log_std ? 0.0 : 1.0;
                d.logp[i] += gauss_log_density(eps, log_std) - log1m_tanh_sq(u) -
                             std::log(cfg_.action_bound);
            }
        }
        return d;
    }

    SacConfig cfg_;
    nn::Mlp actor_;
    nn::Mlp q1_;
    nn::Mlp q2_;
    nn::Mlp target_q1_;
    nn::Mlp target_q2_;
    double log_alpha_;
    nn::ScalarAdam alpha_adam_;
    StateNormalizer norm_;
    bool learning_ = true;
};

} // namespace volfit
