#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volfit/ddpg.hpp"
#include "volfit/market.hpp"
#include "volfit/rewards.hpp"
#include "volfit/sac.hpp"

namespace volfit::harness {

enum class Algorithm { Ddpg, Sac };

inline std::string to_string(Algorithm a) { return a == Algorithm::Ddpg ? "ddpg" : "sac"; }

inline Algorithm parse_algorithm(std::string_view name) {
    if (name == "ddpg") return Algorithm::Ddpg;
    if (name == "sac") return Algorithm::Sac;
    throw ConfigError("unknown algorithm: " + std::string(name));
}

/// One tuple of the hyperparameter grid.
struct HyperParams {
    double actor_lr = 2.5e-3;
    double critic_lr = 2.5e-3;
    double alpha_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.001;
    int buffer_capacity = 1000;
    int batch_size = 64;
    double sigma0 = 0.15;
    double sigma_min = 0.01;
    NoiseKind noise = NoiseKind::Gaussian;
    double ou_theta = 0.15;
    double ou_dt = 1.0;
    double entropy_target = -static_cast<double>(kParamCount);
    double alpha_init = 0.2;
    double action_bound = kDefaultActionBound;
    double flat_level = kDefaultFlatLevel;
    int hidden_units = 256;
    int hidden_layers = 2;
};

/// Table defaults: DDPG uses 2.5e-3 for both networks in the static and
/// sequential settings and (2.5e-5, 2.5e-4) with batch 252 in the dynamic
/// one; SAC uses (2.5e-5, 2.5e-4) everywhere. Buffer capacity is 10^3,
/// doubled for the quasi-dynamic scenario.
inline HyperParams default_hypers(Algorithm algorithm, ScenarioKind scenario) {
    HyperParams h;
    const bool dynamic = scenario == ScenarioKind::QuasiDynamic;
    if (algorithm == Algorithm::Ddpg) {
        h.actor_lr = dynamic ? 2.5e-5 : 2.5e-3;
        h.critic_lr = dynamic ? 2.5e-4 : 2.5e-3;
        h.batch_size = dynamic ? 252 : 64;
    } else {
        h.actor_lr = 2.5e-5;
        h.critic_lr = 2.5e-4;
        h.batch_size = 64;
    }
    h.buffer_capacity = dynamic ? 2000 : 1000;
    return h;
}

inline int default_episodes(Algorithm algorithm, ScenarioKind scenario) {
    switch (scenario) {
        case ScenarioKind::Static: return algorithm == Algorithm::Ddpg ? 1500 : 4000;
        case ScenarioKind::Sequential: return 150;
        default: return 80;
    }
}

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::Ddpg;
    MarketConfig market;
    RewardKind reward_kind = RewardKind::Mse;
    ParamForm form = ParamForm::Quadratic;
    HyperParams hyper;
    std::vector<HyperParams> grid; // empty means { hyper }
    int episodes = 1500;
    int eval_cadence = 10;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::uint64_t eval_seed = 9001;
    std::vector<std::uint64_t> test_seeds{101, 102, 103};
    std::vector<std::uint64_t> validation_seeds; // empty -> derived
    std::optional<double> reward_threshold;      // empty -> 1.1 x benchmark reward
    int validation_agents = 5;
    int trailing_window = 1000;
    double gap_tolerance = 5e-3;
    int jobs = 0; // 0 -> hardware concurrency

    std::vector<HyperParams> tuples() const { return grid.empty() ? std::vector{hyper} : grid; }

    void validate() const {
        market.validate();
        if (episodes < 1) throw ConfigError("episodes must be positive");
        if (eval_cadence < 1) throw ConfigError("eval cadence must be positive");
        if (seeds.empty()) throw ConfigError("at least one training seed is required");
        if (validation_agents < 1) throw ConfigError("validation needs at least one agent");
        const auto check_rates = [](const HyperParams& h) {
            if (!(h.actor_lr > 0.0) || !(h.critic_lr > 0.0) || !(h.alpha_lr > 0.0))
                throw ConfigError("learning rates must be positive");
            if (h.buffer_capacity < h.batch_size)
                throw ConfigError("buffer capacity below batch size");
        };
        check_rates(hyper);
        for (const HyperParams& h : grid) check_rates(h);
    }
};

namespace detail {

inline void apply_hyper_overrides(HyperParams& h, const nlohmann::json& j) {
    h.actor_lr = j.value("actor_lr", h.actor_lr);
    h.critic_lr = j.value("critic_lr", h.critic_lr);
    h.alpha_lr = j.value("alpha_lr", h.alpha_lr);
    h.gamma = j.value("gamma", h.gamma);
    h.tau = j.value("tau", h.tau);
    h.buffer_capacity = j.value("buffer_capacity", h.buffer_capacity);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.sigma0 = j.value("sigma0", h.sigma0);
    h.sigma_min = j.value("sigma_min", h.sigma_min);
    if (j.contains("noise"))
        h.noise = j.at("noise").get<std::string>() == "ou" ? NoiseKind::OrnsteinUhlenbeck
                                                           : NoiseKind::Gaussian;
    h.ou_theta = j.value("ou_theta", h.ou_theta);
    h.ou_dt = j.value("ou_dt", h.ou_dt);
    h.entropy_target = j.value("entropy_target", h.entropy_target);
    h.alpha_init = j.value("alpha_init", h.alpha_init);
    h.action_bound = j.value("action_bound", h.action_bound);
    h.flat_level = j.value("flat_level", h.flat_level);
    h.hidden_units = j.value("hidden_units", h.hidden_units);
    h.hidden_layers = j.value("hidden_layers", h.hidden_layers);
}

inline nlohmann::json hyper_to_json(const HyperParams& h) {
    return nlohmann::json{{"actor_lr", h.actor_lr},
                          {"critic_lr", h.critic_lr},
                          {"alpha_lr", h.alpha_lr},
                          {"gamma", h.gamma},
                          {"tau", h.tau},
                          {"buffer_capacity", h.buffer_capacity},
                          {"batch_size", h.batch_size},
                          {"sigma0", h.sigma0},
                          {"sigma_min", h.sigma_min},
                          {"noise", h.noise == NoiseKind::Gaussian ? "gaussian" : "ou"},
                          {"ou_theta", h.ou_theta},
                          {"ou_dt", h.ou_dt},
                          {"entropy_target", h.entropy_target},
                          {"alpha_init", h.alpha_init},
                          {"action_bound", h.action_bound},
                          {"flat_level", h.flat_level},
                          {"hidden_units", h.hidden_units},
                          {"hidden_layers", h.hidden_layers}};
}

} // namespace detail

inline MarketConfig market_from_json(const nlohmann::json& j) {
    MarketConfig m;
    m.scenario = parse_scenario(j.value("scenario", "static"));
    m.shape = parse_shape(j.value("shape", "skew"));
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        m.grid.kappas = g.at("kappas").get<std::vector<double>>();
        m.grid.maturity = g.value("maturity", 1.0);
    }
    m.episode_steps = j.value("episode_steps", 50);
    m.quoted_spread = j.value("spread", 0.01);
    if (j.contains("custom_mids")) m.custom_mids = j.at("custom_mids").get<std::vector<double>>();
    m.spread_floor = j.value("spread_floor", 5e-4);
    m.vol_floor = j.value("vol_floor", 0.01);
    if (m.scenario == ScenarioKind::QuasiDynamic) {
        if (!j.contains("copula")) throw ConfigError("quasi-dynamic scenario needs a copula block");
        const auto& c = j.at("copula");
        const std::string preset = c.value("preset", "custom");
        if (preset != "custom") {
            m.copula = copula_preset(preset, m.grid);
        } else {
            m.copula.mid_mean = c.at("mid_mean").get<std::vector<double>>();
            m.copula.mid_std = c.at("mid_std").get<std::vector<double>>();
            m.copula.spread_mean = c.at("spread_mean").get<std::vector<double>>();
            m.copula.spread_std = c.at("spread_std").get<std::vector<double>>();
            if (c.contains("correlation"))
                m.copula.correlation = c.at("correlation").get<std::vector<double>>();
        }
        if (c.contains("temporal_mode"))
            m.copula.temporal_mode = parse_temporal_mode(c.at("temporal_mode").get<std::string>());
    }
    m.validate();
    return m;
}

inline nlohmann::json market_to_json(const MarketConfig& m) {
    nlohmann::json j;
    j["scenario"] = to_string(m.scenario);
    j["shape"] = to_string(m.shape);
    j["grid"] = {{"kappas", m.grid.kappas}, {"maturity", m.grid.maturity}};
    j["episode_steps"] = m.episode_steps;
    j["spread"] = m.quoted_spread;
    if (!m.custom_mids.empty()) j["custom_mids"] = m.custom_mids;
    j["spread_floor"] = m.spread_floor;
    j["vol_floor"] = m.vol_floor;
    if (m.scenario == ScenarioKind::QuasiDynamic) {
        j["copula"] = {{"preset", "custom"},
                       {"mid_mean", m.copula.mid_mean},
                       {"mid_std", m.copula.mid_std},
                       {"spread_mean", m.copula.spread_mean},
                       {"spread_std", m.copula.spread_std},
                       {"correlation", m.copula.correlation},
                       {"temporal_mode", to_string(m.copula.temporal_mode)}};
    }
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.algorithm = parse_algorithm(j.value("algorithm", "ddpg"));
    if (j.contains("market")) c.market = market_from_json(j.at("market"));
    c.reward_kind = parse_reward_kind(j.value("reward", "mse"));
    c.form = parse_param_form(j.value("param_form", "quadratic"));
    c.hyper = default_hypers(c.algorithm, c.market.scenario);
    if (j.contains("hyper")) detail::apply_hyper_overrides(c.hyper, j.at("hyper"));
    if (j.contains("grid_search")) {
        for (const auto& entry : j.at("grid_search")) {
            HyperParams h = c.hyper;
            detail::apply_hyper_overrides(h, entry);
            c.grid.push_back(h);
        }
    }
    c.episodes = j.value("episodes", default_episodes(c.algorithm, c.market.scenario));
    c.eval_cadence = j.value("eval_cadence", 10);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.eval_seed = j.value("eval_seed", std::uint64_t{9001});
    if (j.contains("test_seeds"))
        c.test_seeds = j.at("test_seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("validation_seeds"))
        c.validation_seeds = j.at("validation_seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("reward_threshold") && !j.at("reward_threshold").is_null())
        c.reward_threshold = j.at("reward_threshold").get<double>();
    c.validation_agents = j.value("validation_agents", 5);
    c.trailing_window =
        j.value("trailing_window", c.market.scenario == ScenarioKind::Static ? 1000 : 50);
    c.gap_tolerance = j.value("gap_tolerance", 5e-3);
    c.jobs = j.value("jobs", 0);
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["algorithm"] = to_string(c.algorithm);
    j["market"] = market_to_json(c.market);
    j["reward"] = to_string(c.reward_kind);
    j["param_form"] = to_string(c.form);
    j["hyper"] = detail::hyper_to_json(c.hyper);
    if (!c.grid.empty()) {
        nlohmann::json g = nlohmann::json::array();
        for (const HyperParams& h : c.grid) g.push_back(detail::hyper_to_json(h));
        j["grid_search"] = g;
    }
    j["episodes"] = c.episodes;
    j["eval_cadence"] = c.eval_cadence;
    j["seeds"] = c.seeds;
    j["eval_seed"] = c.eval_seed;
    j["test_seeds"] = c.test_seeds;
    if (!c.validation_seeds.empty()) j["validation_seeds"] = c.validation_seeds;
    if (c.reward_threshold) j["reward_threshold"] = *c.reward_threshold;
    j["validation_agents"] = c.validation_agents;
    j["trailing_window"] = c.trailing_window;
    j["gap_tolerance"] = c.gap_tolerance;
    j["jobs"] = c.jobs;
    return j;
}

inline DdpgConfig make_ddpg_config(const HyperParams& h, double reward_threshold,
                                   ScenarioKind scenario) {
    DdpgConfig c;
    c.actor_lr = h.actor_lr;
    c.critic_lr = h.critic_lr;
    c.gamma = h.gamma;
    c.tau = h.tau;
    c.sigma0 = h.sigma0;
    c.sigma_min = h.sigma_min;
    c.action_bound = h.action_bound;
    c.batch_size = h.batch_size;
    c.hidden_units = h.hidden_units;
    c.hidden_layers = h.hidden_layers;
    c.noise = h.noise;
    c.ou_theta = h.ou_theta;
    c.ou_dt = h.ou_dt;
    c.reward_threshold = reward_threshold;
    c.threshold_on_step = scenario != ScenarioKind::QuasiDynamic;
    return c;
}

inline SacConfig make_sac_config(const HyperParams& h, double reward_threshold,
                                 ScenarioKind scenario) {
    SacConfig c;
    c.actor_lr = h.actor_lr;
    c.critic_lr = h.critic_lr;
    c.alpha_lr = h.alpha_lr;
    c.gamma = h.gamma;
    c.tau = h.tau;
    c.action_bound = h.action_bound;
    c.batch_size = h.batch_size;
    c.hidden_units = h.hidden_units;
    c.hidden_layers = h.hidden_layers;
    c.entropy_target = h.entropy_target;
    c.alpha_init = h.alpha_init;
    c.reward_threshold = reward_threshold;
    c.threshold_on_step = scenario != ScenarioKind::QuasiDynamic;
    return c;
}

} // namespace volfit::harness
