#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "volfit/bench.hpp"
#include "volfit/config.hpp"
#include "volfit/ddpg.hpp"
#include "volfit/env.hpp"
#include "volfit/replay.hpp"
#include "volfit/sac.hpp"

namespace volfit::harness {

/// splitmix64 over (base, stream) for decorrelated per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t x = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

/// Shortest round-trippable decimal form; stable across reruns.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    jobs = std::clamp(jobs, 1, std::max(count, 1));
    if (jobs == 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Mean after dropping the worst floor(n * fraction) entries.
inline double trimmed_mean(std::vector<double> values, double drop_fraction = 0.25) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t drop = static_cast<std::size_t>(values.size() * drop_fraction);
    double sum = 0.0;
    for (std::size_t i = drop; i < values.size(); ++i) sum += values[i];
    return sum / static_cast<double>(values.size() - drop);
}

/// Reference reward of the classical optimizer: the fixed slice for static
/// and sequential markets, the per-step mean along the eval-seed quote path
/// for quasi-dynamic ones.
inline double benchmark_reference(const ExperimentConfig& cfg) {
    if (cfg.market.scenario != ScenarioKind::QuasiDynamic) {
        const QuoteSlice q = gen_static(cfg.market);
        return benchmark_fit(q, cfg.market.grid, cfg.reward_kind, cfg.form).reward;
    }
    MarketProcess process(cfg.market, cfg.eval_seed);
    QuoteSlice q = process.initial();
    double total = 0.0;
    for (int t = 0; t < cfg.market.steps(); ++t) {
        total += benchmark_fit(q, cfg.market.grid, cfg.reward_kind, cfg.form).reward;
        if (t + 1 < cfg.market.steps()) q = process.next(q);
    }
    return total / cfg.market.steps();
}

struct EvalPoint {
    int episode = 0;
    double mean_reward = 0.0;
};

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::vector<EvalPoint> evals;
    double best_det_reward = -std::numeric_limits<double>::infinity();
    std::vector<double> final_eval_rewards;
    double final_eval_mean = -std::numeric_limits<double>::infinity();
    double window_best_det = -std::numeric_limits<double>::infinity();
    std::vector<double> window_mean_slice;
    bool learning_at_end = true;
    nlohmann::json checkpoint;
};

struct EpisodeSummary {
    std::vector<double> rewards;
    std::vector<double> det_rewards;
    bool learning_at_end = true;
};

namespace detail {

inline Action deterministic_action(const DdpgAgent& a, const EnvState& s) { return a.act(s); }
inline Action deterministic_action(const SacAgent& a, const EnvState& s) { return a.act_mean(s); }

inline const char* trace_header(const DdpgAgent&) {
    return "episode,step,r,r_det,critic_loss,actor_obj,sigma,learning_flag\n";
}
inline const char* trace_header(const SacAgent&) {
    return "episode,step,r,r_det,j_q1,j_q2,j_pi,alpha,entropy_estimate,learning_flag\n";
}

inline EpisodeSummary run_train_episode(DdpgAgent& agent, FittingEnv& env, ReplayBuffer& buffer,
                                        int episode, int total_episodes, std::mt19937_64& rng,
                                        std::ostream* trace) {
    const EpisodeLog log = agent.train_episode(env, buffer, episode, total_episodes, rng);
    if (trace) {
        for (std::size_t t = 0; t < log.rewards.size(); ++t)
            *trace << episode << ',' << t << ',' << fmt_g17(log.rewards[t]) << ','
                   << fmt_g17(log.det_rewards[t]) << ',' << fmt_g17(log.critic_losses[t]) << ','
                   << fmt_g17(log.actor_objectives[t]) << ',' << fmt_g17(log.sigma) << ','
                   << int(log.learning[t]) << '\n';
    }
    return {log.rewards, log.det_rewards, !log.learning.empty() && log.learning.back() != 0};
}

inline EpisodeSummary run_train_episode(SacAgent& agent, FittingEnv& env, ReplayBuffer& buffer,
                                        int episode, int /*total_episodes*/, std::mt19937_64& rng,
                                        std::ostream* trace) {
    const SacEpisodeLog log = agent.train_episode(env, buffer, rng);
    if (trace) {
        for (std::size_t t = 0; t < log.rewards.size(); ++t)
            *trace << episode << ',' << t << ',' << fmt_g17(log.rewards[t]) << ','
                   << fmt_g17(log.det_rewards[t]) << ',' << fmt_g17(log.q1_losses[t]) << ','
                   << fmt_g17(log.q2_losses[t]) << ',' << fmt_g17(log.policy_losses[t]) << ','
                   << fmt_g17(log.alphas[t]) << ',' << fmt_g17(log.entropy_estimates[t]) << ','
                   << int(log.learning[t]) << '\n';
    }
    return {log.rewards, log.det_rewards, !log.learning.empty() && log.learning.back() != 0};
}

template <class AgentT>
AgentT construct_agent(int state_dim, const HyperParams& h, double reward_threshold,
                       ScenarioKind scenario, std::uint64_t seed) {
    if constexpr (std::is_same_v<AgentT, DdpgAgent>)
        return AgentT(state_dim, make_ddpg_config(h, reward_threshold, scenario), seed);
    else
        return AgentT(state_dim, make_sac_config(h, reward_threshold, scenario), seed);
}

} // namespace detail

/// Deterministic rollout: exploration and learning off, normalizer frozen.
template <class AgentT>
std::vector<double> eval_episode(const AgentT& agent, FittingEnv& env) {
    std::vector<double> rewards;
    EnvState s = env.reset();
    bool done = false;
    while (!done) {
        const StepResult res = env.step(detail::deterministic_action(agent, s));
        rewards.push_back(res.reward);
        s = res.state;
        done = res.done;
    }
    return rewards;
}

template <class AgentT>
FittingEnv make_env(const ExperimentConfig& cfg, const HyperParams& h, std::uint64_t seed) {
    return FittingEnv(cfg.market, cfg.reward_kind, cfg.form, seed, h.action_bound, h.flat_level);
}

/// Train one agent with one seed. Evaluation episodes run every
/// eval_cadence training episodes on the fixed eval seed; for quasi-dynamic
/// markets they also feed the learning gate.
template <class AgentT>
SeedRunResult train_single_run(const ExperimentConfig& cfg, const HyperParams& hypers,
                               std::uint64_t seed, double reward_threshold,
                               const std::string& trace_path = "", bool keep_checkpoint = false) {
    FittingEnv env = make_env<AgentT>(cfg, hypers, mix_seed(seed, 1));
    AgentT agent = detail::construct_agent<AgentT>(env.state_dim(), hypers, reward_threshold,
                                                   cfg.market.scenario, mix_seed(seed, 2));
    ReplayBuffer buffer(hypers.buffer_capacity,
                        cfg.market.scenario == ScenarioKind::QuasiDynamic
                            ? InsertPolicy::Fifo
                            : InsertPolicy::RewardAware);
    std::mt19937_64 rng(mix_seed(seed, 3));

    std::ofstream trace;
    if (!trace_path.empty()) {
        trace.open(trace_path, std::ios::binary);
        if (!trace) throw ConfigError("cannot open trace file: " + trace_path);
        trace << detail::trace_header(agent);
    }

    SeedRunResult out;
    out.seed = seed;
    std::deque<std::pair<double, std::vector<double>>> window; // (episode best r^D, final slice)

    for (int n = 0; n < cfg.episodes; ++n) {
        const EpisodeSummary summary = detail::run_train_episode(
            agent, env, buffer, n, cfg.episodes, rng, trace.is_open() ? &trace : nullptr);
        out.learning_at_end = summary.learning_at_end;
        double episode_best = -std::numeric_limits<double>::infinity();
        for (double r : summary.det_rewards) episode_best = std::max(episode_best, r);
        out.best_det_reward = std::max(out.best_det_reward, episode_best);

        window.emplace_back(episode_best, eval_slice(env.theta(), cfg.market.grid, cfg.form));
        if (static_cast<int>(window.size()) > cfg.trailing_window) window.pop_front();

        if ((n + 1) % cfg.eval_cadence == 0) {
            FittingEnv eval_env = make_env<AgentT>(cfg, hypers, cfg.eval_seed);
            const std::vector<double> rewards = eval_episode(agent, eval_env);
            const double mean =
                std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
            out.evals.push_back({n + 1, mean});
            if (cfg.market.scenario == ScenarioKind::QuasiDynamic) agent.note_eval_mean(mean);
        }
    }

    {
        FittingEnv eval_env = make_env<AgentT>(cfg, hypers, cfg.eval_seed);
        out.final_eval_rewards = eval_episode(agent, eval_env);
        out.final_eval_mean =
            std::accumulate(out.final_eval_rewards.begin(), out.final_eval_rewards.end(), 0.0) /
            out.final_eval_rewards.size();
    }

    if (!window.empty()) {
        const std::size_t n_pts = window.front().second.size();
        out.window_mean_slice.assign(n_pts, 0.0);
        for (const auto& [best, slice] : window) {
            out.window_best_det = std::max(out.window_best_det, best);
            for (std::size_t j = 0; j < n_pts; ++j) out.window_mean_slice[j] += slice[j];
        }
        for (double& v : out.window_mean_slice) v /= static_cast<double>(window.size());
    }
    if (keep_checkpoint) out.checkpoint = agent.to_json();
    return out;
}

inline SeedRunResult train_single_run_any(const ExperimentConfig& cfg, const HyperParams& hypers,
                                          std::uint64_t seed, double reward_threshold,
                                          const std::string& trace_path = "",
                                          bool keep_checkpoint = false) {
    if (cfg.algorithm == Algorithm::Ddpg)
        return train_single_run<DdpgAgent>(cfg, hypers, seed, reward_threshold, trace_path,
                                           keep_checkpoint);
    return train_single_run<SacAgent>(cfg, hypers, seed, reward_threshold, trace_path,
                                      keep_checkpoint);
}

struct TrainingOutcome {
    int winning_tuple = 0;
    HyperParams winning_hypers;
    double stopping_threshold = -std::numeric_limits<double>::infinity();
    double bench_reference = 0.0;
    double reward_threshold = 0.0;
    std::vector<double> tuple_scores;
    std::vector<std::vector<double>> tuple_curves; // trimmed mean per eval point
    std::vector<std::vector<SeedRunResult>> runs;  // [tuple][seed]
};

/// Training phase: every grid tuple is trained on every seed, scored by the
/// trimmed mean (worst quartile of seeds excluded) of per-seed average
/// evaluation rewards. The stopping threshold is the best trimmed-mean
/// evaluation reward reached by the winning tuple.
inline TrainingOutcome run_training(const ExperimentConfig& cfg, const std::string& out_dir = "") {
    cfg.validate();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TrainingOutcome outcome;
    outcome.bench_reference = benchmark_reference(cfg);
    outcome.reward_threshold = cfg.reward_threshold.value_or(1.1 * outcome.bench_reference);

    const std::vector<HyperParams> tuples = cfg.tuples();
    const int n_tuples = static_cast<int>(tuples.size());
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    outcome.runs.assign(n_tuples, std::vector<SeedRunResult>(n_seeds));

    parallel_for(cfg.jobs, n_tuples * n_seeds, [&](int task) {
        const int ti = task / n_seeds;
        const int si = task % n_seeds;
        std::string trace_path;
        if (!out_dir.empty())
            trace_path = out_dir + "/trace_" + to_string(cfg.algorithm) + "_t" +
                         std::to_string(ti) + "_s" + std::to_string(cfg.seeds[si]) + ".csv";
        outcome.runs[ti][si] = train_single_run_any(cfg, tuples[ti], cfg.seeds[si],
                                                    outcome.reward_threshold, trace_path);
    });

    outcome.tuple_scores.resize(n_tuples);
    outcome.tuple_curves.resize(n_tuples);
    for (int ti = 0; ti < n_tuples; ++ti) {
        std::vector<double> per_seed_scores;
        for (const SeedRunResult& r : outcome.runs[ti]) {
            double mean = 0.0;
            for (const EvalPoint& e : r.evals) mean += e.mean_reward;
            per_seed_scores.push_back(r.evals.empty() ? r.final_eval_mean
                                                      : mean / r.evals.size());
        }
        outcome.tuple_scores[ti] = trimmed_mean(per_seed_scores);

        const std::size_t n_evals = outcome.runs[ti].front().evals.size();
        for (std::size_t e = 0; e < n_evals; ++e) {
            std::vector<double> across_seeds;
            for (const SeedRunResult& r : outcome.runs[ti])
                across_seeds.push_back(r.evals[e].mean_reward);
            outcome.tuple_curves[ti].push_back(trimmed_mean(across_seeds));
        }
    }

    outcome.winning_tuple = static_cast<int>(
        std::max_element(outcome.tuple_scores.begin(), outcome.tuple_scores.end()) -
        outcome.tuple_scores.begin());
    outcome.winning_hypers = tuples[outcome.winning_tuple];
    for (double v : outcome.tuple_curves[outcome.winning_tuple])
        outcome.stopping_threshold = std::max(outcome.stopping_threshold, v);

    if (!out_dir.empty()) {
        std::ofstream curves(out_dir + "/training_curves.csv", std::ios::binary);
        curves << "tuple,eval_index,episode,trimmed_mean_reward,cumulative_mean_reward\n";
        for (int ti = 0; ti < n_tuples; ++ti) {
            double cum = 0.0;
            for (std::size_t e = 0; e < outcome.tuple_curves[ti].size(); ++e) {
                cum += outcome.tuple_curves[ti][e];
                curves << ti << ',' << e << ','
                       << outcome.runs[ti].front().evals[e].episode << ','
                       << fmt_g17(outcome.tuple_curves[ti][e]) << ','
                       << fmt_g17(cum / static_cast<double>(e + 1)) << '\n';
            }
        }

        nlohmann::json summary;
        summary["winning_tuple"] = outcome.winning_tuple;
        summary["winning_hypers"] = detail::hyper_to_json(outcome.winning_hypers);
        summary["stopping_threshold"] = outcome.stopping_threshold;
        summary["bench_reference"] = outcome.bench_reference;
        summary["reward_threshold"] = outcome.reward_threshold;
        summary["tuple_scores"] = outcome.tuple_scores;
        nlohmann::json seeds_json = nlohmann::json::array();
        for (int ti = 0; ti < n_tuples; ++ti)
            for (int si = 0; si < n_seeds; ++si) {
                const SeedRunResult& r = outcome.runs[ti][si];
                seeds_json.push_back({{"tuple", ti},
                                      {"seed", r.seed},
                                      {"best_det_reward", r.best_det_reward},
                                      {"final_eval_mean", r.final_eval_mean},
                                      {"window_best_det", r.window_best_det},
                                      {"window_mean_slice", r.window_mean_slice},
                                      {"learning_at_end", r.learning_at_end}});
            }
        summary["seed_runs"] = seeds_json;
        std::ofstream(out_dir + "/training_summary.json", std::ios::binary)
            << summary.dump(2) << '\n';
    }
    return outcome;
}

struct ValidationOutcome {
    bool has_candidate = false;
    int best_index = -1;
    std::uint64_t best_seed = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    std::vector<double> agent_means;
    std::vector<bool> successful;
    nlohmann::json best_checkpoint;
};

/// Validation phase: fresh agents on distinct seeds with the winning tuple;
/// an agent succeeds when its validation-episode mean reward reaches the
/// stopping threshold. Ties break toward the first index.
inline ValidationOutcome run_validation(const ExperimentConfig& cfg, const HyperParams& hypers,
                                        double threshold, const std::string& out_dir = "") {
    cfg.validate();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    std::vector<std::uint64_t> seeds = cfg.validation_seeds;
    if (seeds.empty())
        for (int i = 0; i < cfg.validation_agents; ++i)
            seeds.push_back(mix_seed(0x76616c5f, static_cast<std::uint64_t>(i)));

    const double bench = benchmark_reference(cfg);
    const double reward_threshold = cfg.reward_threshold.value_or(1.1 * bench);

    const int n = static_cast<int>(seeds.size());
    std::vector<SeedRunResult> results(n);
    parallel_for(cfg.jobs, n, [&](int i) {
        std::string trace_path;
        if (!out_dir.empty())
            trace_path = out_dir + "/trace_validation_s" + std::to_string(seeds[i]) + ".csv";
        results[i] =
            train_single_run_any(cfg, hypers, seeds[i], reward_threshold, trace_path, true);
    });

    ValidationOutcome out;
    for (int i = 0; i < n; ++i) {
        out.agent_means.push_back(results[i].final_eval_mean);
        const bool ok = results[i].final_eval_mean >= threshold;
        out.successful.push_back(ok);
        if (ok && results[i].final_eval_mean > out.best_mean) {
            out.best_mean = results[i].final_eval_mean;
            out.best_index = i;
            out.best_seed = seeds[i];
            out.has_candidate = true;
        }
    }
    if (out.has_candidate) out.best_checkpoint = results[out.best_index].checkpoint;

    if (!out_dir.empty()) {
        nlohmann::json j;
        j["threshold"] = threshold;
        j["agent_means"] = out.agent_means;
        j["successful"] = out.successful;
        j["has_candidate"] = out.has_candidate;
        j["best_index"] = out.best_index;
        j["best_seed"] = out.best_seed;
        std::ofstream(out_dir + "/validation_summary.json", std::ios::binary)
            << j.dump(2) << '\n';
        if (out.has_candidate)
            std::ofstream(out_dir + "/best_agent.json", std::ios::binary)
                << out.best_checkpoint.dump() << '\n';
    }
    return out;
}

struct TestOutcome {
    std::vector<std::uint64_t> seeds;
    std::vector<double> mean_rewards;       // per seed
    std::vector<double> mean_bench_rewards; // per seed
    std::vector<std::vector<double>> step_rewards;
    std::vector<std::vector<double>> step_bench;
    int steps_passed = 0;
    int steps_total = 0;
};

/// Testing phase: deterministic episodes of the loaded best agent per test
/// seed, with the per-step classical-optimizer reward for comparison.
inline TestOutcome run_testing(const ExperimentConfig& cfg, const nlohmann::json& checkpoint,
                               const std::string& out_dir = "") {
    cfg.validate();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TestOutcome out;
    std::ofstream steps_csv, smile_csv;
    if (!out_dir.empty()) {
        steps_csv.open(out_dir + "/test_steps.csv", std::ios::binary);
        steps_csv << "seed,step,reward,bench_reward,gap,pass\n";
        smile_csv.open(out_dir + "/test_smile.csv", std::ios::binary);
        smile_csv << "seed,step,kappa,bid,ask,mid,model_vol\n";
    }

    const auto run_episode = [&](auto&& agent, std::uint64_t seed) {
        FittingEnv env = make_env<DdpgAgent>(cfg, cfg.hyper, mix_seed(seed, 11));
        std::ofstream trace;
        if (!out_dir.empty()) {
            trace.open(out_dir + "/test_trace_s" + std::to_string(seed) + ".jsonl",
                       std::ios::binary);
        }
        EnvState s = env.reset();
        bool done = false;
        std::vector<double> rewards, bench_rewards;
        int step = 0;
        while (!done) {
            const QuoteSlice quotes = env.quotes();
            const double bench_r =
                benchmark_fit(quotes, cfg.market.grid, cfg.reward_kind, cfg.form).reward;
            const Action a = detail::deterministic_action(agent, s);
            const StepResult res = env.step(a);
            rewards.push_back(res.reward);
            bench_rewards.push_back(bench_r);
            const double gap = bench_r - res.reward;
            const bool pass = gap <= cfg.gap_tolerance;
            out.steps_total += 1;
            out.steps_passed += pass ? 1 : 0;
            if (steps_csv.is_open())
                steps_csv << seed << ',' << step << ',' << fmt_g17(res.reward) << ','
                          << fmt_g17(bench_r) << ',' << fmt_g17(gap) << ',' << (pass ? 1 : 0)
                          << '\n';
            if (smile_csv.is_open()) {
                const std::vector<double> model =
                    eval_slice(env.theta(), cfg.market.grid, cfg.form);
                for (int j = 0; j < cfg.market.grid.size(); ++j)
                    smile_csv << seed << ',' << step << ',' << fmt_g17(cfg.market.grid.kappas[j])
                              << ',' << fmt_g17(quotes.bid[j]) << ',' << fmt_g17(quotes.ask[j])
                              << ',' << fmt_g17(quotes.mid(j)) << ',' << fmt_g17(model[j])
                              << '\n';
            }
            if (trace.is_open()) {
                nlohmann::json rec;
                rec["step"] = step;
                rec["s"] = s;
                rec["a"] = a;
                rec["r"] = res.reward;
                rec["theta"] = env.theta();
                rec["quotes"] = {{"bid", quotes.bid}, {"ask", quotes.ask}};
                trace << rec.dump() << '\n';
            }
            s = res.state;
            done = res.done;
            ++step;
        }
        out.seeds.push_back(seed);
        out.mean_rewards.push_back(std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                                   rewards.size());
        out.mean_bench_rewards.push_back(
            std::accumulate(bench_rewards.begin(), bench_rewards.end(), 0.0) /
            bench_rewards.size());
        out.step_rewards.push_back(std::move(rewards));
        out.step_bench.push_back(std::move(bench_rewards));
    };

    if (cfg.algorithm == Algorithm::Ddpg) {
        DdpgConfig acfg = make_ddpg_config(cfg.hyper, 0.0, cfg.market.scenario);
        DdpgAgent agent = DdpgAgent::from_json(checkpoint, acfg);
        agent.stop_learning();
        for (std::uint64_t seed : cfg.test_seeds) run_episode(agent, seed);
    } else {
        SacConfig acfg = make_sac_config(cfg.hyper, 0.0, cfg.market.scenario);
        SacAgent agent = SacAgent::from_json(checkpoint, acfg);
        agent.stop_learning();
        for (std::uint64_t seed : cfg.test_seeds) run_episode(agent, seed);
    }

    if (!out_dir.empty()) {
        nlohmann::json j;
        j["seeds"] = out.seeds;
        j["mean_rewards"] = out.mean_rewards;
        j["mean_bench_rewards"] = out.mean_bench_rewards;
        j["steps_passed"] = out.steps_passed;
        j["steps_total"] = out.steps_total;
        std::ofstream(out_dir + "/test_report.json", std::ios::binary) << j.dump(2) << '\n';
    }
    return out;
}

/// One episode of quotes as CSV (step,kappa,bid,ask).
inline void write_market_csv(const MarketConfig& market, std::uint64_t seed, std::ostream& os) {
    MarketProcess process(market, seed);
    os << "step,kappa,bid,ask\n";
    QuoteSlice q = process.initial();
    for (int t = 0; t < market.steps(); ++t) {
        for (int j = 0; j < market.grid.size(); ++j)
            os << t << ',' << fmt_g17(market.grid.kappas[j]) << ',' << fmt_g17(q.bid[j]) << ','
               << fmt_g17(q.ask[j]) << '\n';
        if (t + 1 < market.steps()) q = process.next(q);
    }
}

} // namespace volfit::harness
