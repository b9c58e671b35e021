#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volfit/detail/batch.hpp"
#include "volfit/env.hpp"
#include "volfit/nn.hpp"
#include "volfit/replay.hpp"

namespace volfit {

enum class NoiseKind { Gaussian, OrnsteinUhlenbeck };

struct DdpgConfig {
    double actor_lr = 2.5e-3;
    double critic_lr = 2.5e-3;
    double gamma = 0.99;
    double tau = 0.001;
    double sigma0 = 0.15;
    double sigma_min = 0.01;
    double action_bound = kDefaultActionBound;
    int batch_size = 64;
    int hidden_units = 256;
    int hidden_layers = 2;
    NoiseKind noise = NoiseKind::Gaussian;
    double ou_theta = 0.15;
    double ou_dt = 1.0;
    /// Learning stops for good once the deterministic reward (static and
    /// sequential scenarios) or the evaluation-episode mean (quasi-dynamic)
    /// exceeds this threshold. +inf keeps learning for the whole run;
    /// -inf degenerates to pure exploitation after the first step.
    double reward_threshold = std::numeric_limits<double>::infinity();
    bool threshold_on_step = true;
    /// Steps between gradient updates. 1 updates every step; an episode-long
    /// stride performs the parameter transition once per episode, matching
    /// the episode-indexed parameters of the training loop.
    int update_stride = 1;
};

struct EpisodeLog {
    std::vector<double> rewards;
    std::vector<double> det_rewards;
    std::vector<double> critic_losses;
    std::vector<double> actor_objectives;
    std::vector<std::uint8_t> learning;
    double sigma = 0.0;
};

/// DDPG with a deterministic tanh-bounded actor, one critic, target copies
/// of both, power-decaying Gaussian exploration and a reward-threshold
/// learning gate.
class DdpgAgent {
  public:
    DdpgAgent(int state_dim, const DdpgConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), norm_(state_dim) {
        std::vector<int> actor_dims{state_dim};
        std::vector<int> critic_dims{state_dim + kParamCount};
        for (int i = 0; i < cfg.hidden_layers; ++i) {
            actor_dims.push_back(cfg.hidden_units);
            critic_dims.push_back(cfg.hidden_units);
        }
        actor_dims.push_back(kParamCount);
        critic_dims.push_back(1);
        actor_ = nn::Mlp::xavier(actor_dims, nn::Activation::ReLU, nn::OutputHead::ScaledTanh,
                                 cfg.action_bound, seed);
        critic_ = nn::Mlp::xavier(critic_dims, nn::Activation::ReLU, nn::OutputHead::Linear, 1.0,
                                  seed + 1);
        target_actor_ = actor_;
        target_critic_ = critic_;
    }

    /// Wire in caller-built networks (targets start as copies). Used by
    /// checkpoint restore and by tests that inject hand-crafted critics.
    static DdpgAgent from_networks(const DdpgConfig& cfg, nn::Mlp actor, nn::Mlp critic) {
        DdpgAgent agent(actor.input_dim(), cfg, 0);
        agent.actor_ = std::move(actor);
        agent.critic_ = std::move(critic);
        agent.target_actor_ = agent.actor_;
        agent.target_critic_ = agent.critic_;
        return agent;
    }

    const DdpgConfig& config() const { return cfg_; }
    bool learning() const { return learning_; }
    void stop_learning() { learning_ = false; }
    StateNormalizer& normalizer() { return norm_; }
    const StateNormalizer& normalizer() const { return norm_; }
    const nn::Mlp& actor() const { return actor_; }
    const nn::Mlp& critic() const { return critic_; }
    const nn::Mlp& target_actor() const { return target_actor_; }
    const nn::Mlp& target_critic() const { return target_critic_; }

    /// sigma_n = max(sigma0 (1 - n/N)^4, sigma_min)
    double noise_sigma(int episode, int total_episodes) const {
        const double frac = total_episodes > 0
                                ? static_cast<double>(episode) / static_cast<double>(total_episodes)
                                : 0.0;
        const double decayed = cfg_.sigma0 * std::pow(1.0 - frac, 4);
        return std::max(decayed, cfg_.sigma_min);
    }

    Action act(const EnvState& s) const {
        const std::vector<double> out = actor_.forward(norm_.normalize(s));
        return {out[0], out[1], out[2]};
    }

    Action explore_action(const EnvState& s, int episode, int total_episodes,
                          std::mt19937_64& rng) {
        return add_noise(act(s), noise_sigma(episode, total_episodes), rng);
    }

    /// One Adam step on the critic against targets from the target networks;
    /// terminal transitions drop the bootstrap term. Returns the batch loss.
    double critic_update(const std::vector<Transition>& batch) {
        const auto view = detail::make_batch_view(batch, norm_);
        const int b = view.size;

        const nn::Mlp::Mat next_actions = target_actor_.forward_batch(view.next_states);
        const nn::Mlp::Mat next_q =
            target_critic_.forward_batch(detail::concat_rows(view.next_states, next_actions));

        nn::Mlp::Cache cache;
        const nn::Mlp::Mat q =
            critic_.forward_batch(detail::concat_rows(view.states, view.actions), &cache);

        nn::Mlp::Mat dq(1, b);
        double loss = 0.0;
        for (int i = 0; i < b; ++i) {
            // rewards are <= 0, so every return is <= 0; clamping the
            // bootstrap keeps critic extrapolation phantoms out of targets
            const double target = std::min(
                0.0, view.rewards[i] + (view.done[i] ? 0.0 : cfg_.gamma * next_q.at(0, i)));
            const double diff = q.at(0, i) - target;
            loss += diff * diff;
            dq.at(0, i) = 2.0 * diff / b;
        }
        loss /= b;

        nn::Mlp::Grads grads;
        critic_.backward_batch(cache, dq, &grads);
        critic_.adam_step(grads, {cfg_.critic_lr});
        return loss;
    }

    /// One Adam ascent step on the batch-mean critic value of the actor's
    /// actions; the critic is only read, never updated here. Returns the
    /// objective (mean Q).
    double actor_update(const std::vector<Transition>& batch) {
        const auto view = detail::make_batch_view(batch, norm_);
        const int b = view.size;

        nn::Mlp::Cache actor_cache;
        const nn::Mlp::Mat actions = actor_.forward_batch(view.states, &actor_cache);

        nn::Mlp::Cache critic_cache;
        const nn::Mlp::Mat q =
            critic_.forward_batch(detail::concat_rows(view.states, actions), &critic_cache);
        double objective = 0.0;
        for (int i = 0; i < b; ++i) objective += q.at(0, i);
        objective /= b;

        nn::Mlp::Mat dq(1, b);
        for (int i = 0; i < b; ++i) dq.at(0, i) = -1.0 / b; // ascend Q
        nn::Mlp::Mat d_input;
        critic_.backward_batch(critic_cache, dq, nullptr, &d_input);
        const nn::Mlp::Mat d_actions =
            detail::slice_rows(d_input, view.states.rows, kParamCount);

        nn::Mlp::Grads grads;
        actor_.backward_batch(actor_cache, d_actions, &grads);
        actor_.adam_step(grads, {cfg_.actor_lr});
        return objective;
    }

    void update_targets() {
        nn::polyak_update(target_actor_, actor_, cfg_.tau);
        nn::polyak_update(target_critic_, critic_, cfg_.tau);
    }

    /// Alg.-style episode: act with exploration noise, score the
    /// deterministic action counterfactually on the same quotes, store the
    /// explored transition, and run one critic + actor + target update per
    /// step while the learning gate is open.
    EpisodeLog train_episode(FittingEnv& env, ReplayBuffer& buffer, int episode,
                             int total_episodes, std::mt19937_64& rng) {
        EpisodeLog log;
        log.sigma = noise_sigma(episode, total_episodes);
        ou_state_ = {0.0, 0.0, 0.0};
        EnvState s = env.reset();
        for (int t = 0; t < env.episode_length(); ++t) {
            if (learning_) norm_.observe(s);
            const Action det = act(s);
            const double det_reward = env.counterfactual_reward(det);
            const Action a = add_noise(det, log.sigma, rng);
            const StepResult res = env.step(a);
            buffer.store({s, a, res.reward, res.state, res.done});

            double critic_loss = std::numeric_limits<double>::quiet_NaN();
            double actor_objective = std::numeric_limits<double>::quiet_NaN();
            // updates begin once the buffer has been pre-filled to capacity
            // by the exploration policy
            if (learning_ && buffer.full() && (t + 1) % cfg_.update_stride == 0) {
                if (const auto batch = buffer.sample(cfg_.batch_size, rng)) {
                    critic_loss = critic_update(*batch);
                    actor_objective = actor_update(*batch);
                    update_targets();
                }
            }
            if (cfg_.threshold_on_step && det_reward > cfg_.reward_threshold) learning_ = false;

            log.rewards.push_back(res.reward);
            log.det_rewards.push_back(det_reward);
            log.critic_losses.push_back(critic_loss);
            log.actor_objectives.push_back(actor_objective);
            log.learning.push_back(learning_ ? 1 : 0);
            s = res.state;
        }
        return log;
    }

    /// Quasi-dynamic learning gate: fed with the latest evaluation-episode
    /// mean reward by the experiment loop.
    void note_eval_mean(double mean_reward) {
        if (mean_reward > cfg_.reward_threshold) learning_ = false;
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
        mix(critic_.params());
        mix(target_actor_.params());
        mix(target_critic_.params());
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = "ddpg";
        j["actor"] = actor_.to_json();
        j["critic"] = critic_.to_json();
        j["target_actor"] = target_actor_.to_json();
        j["target_critic"] = target_critic_.to_json();
        j["normalizer"] = {{"mean", norm_.mean()},
                           {"m2", norm_.m2()},
                           {"count", norm_.count()}};
        j["learning"] = learning_;
        return j;
    }

    static DdpgAgent from_json(const nlohmann::json& j, const DdpgConfig& cfg) {
        if (j.value("kind", "") != "ddpg") throw CheckpointError("not a ddpg checkpoint");
        nn::Mlp actor = nn::Mlp::from_json(j.at("actor"));
        DdpgAgent agent(actor.input_dim(), cfg, 0);
        agent.actor_ = std::move(actor);
        agent.critic_ = nn::Mlp::from_json(j.at("critic"));
        agent.target_actor_ = nn::Mlp::from_json(j.at("target_actor"));
        agent.target_critic_ = nn::Mlp::from_json(j.at("target_critic"));
        agent.norm_.restore(j.at("normalizer").at("mean").get<std::vector<double>>(),
                            j.at("normalizer").at("m2").get<std::vector<double>>(),
                            j.at("normalizer").at("count").get<std::int64_t>());
        agent.learning_ = j.value("learning", false);
        return agent;
    }

  private:
    Action add_noise(const Action& base, double sigma, std::mt19937_64& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Action out;
        for (int i = 0; i < kParamCount; ++i) {
            double eps;
            if (cfg_.noise == NoiseKind::Gaussian) {
                eps = sigma * normal(rng);
            } else {
                ou_state_[i] += cfg_.ou_theta * (0.0 - ou_state_[i]) * cfg_.ou_dt +
                                sigma * std::sqrt(cfg_.ou_dt) * normal(rng);
                eps = ou_state_[i];
            }
            out[i] = std::clamp(base[i] + eps, -cfg_.action_bound, cfg_.action_bound);
        }
        return out;
    }

    DdpgConfig cfg_;
    nn::Mlp actor_;
    nn::Mlp critic_;
    nn::Mlp target_actor_;
    nn::Mlp target_critic_;
    StateNormalizer norm_;
    Action ou_state_{0.0, 0.0, 0.0};
    bool learning_ = true;
};

} // namespace volfit
