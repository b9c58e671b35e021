#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "volfit/harness.hpp"

using namespace volfit;
using namespace volfit::harness;
using Catch::Approx;

namespace {

ExperimentConfig tiny_static(Algorithm algo = Algorithm::Ddpg) {
    ExperimentConfig cfg;
    cfg.algorithm = algo;
    cfg.market.scenario = ScenarioKind::Static;
    cfg.market.shape = MarketShape::Skew;
    cfg.hyper = default_hypers(algo, ScenarioKind::Static);
    cfg.hyper.hidden_units = 16;
    cfg.hyper.batch_size = 8;
    cfg.hyper.buffer_capacity = 64;
    cfg.episodes = 30;
    cfg.eval_cadence = 10;
    cfg.seeds = {1, 2};
    cfg.trailing_window = 20;
    cfg.jobs = 1;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("trimmed mean drops exactly the worst quartile", "[harness]") {
    // fewer than 4 values: nothing dropped, plain mean
    REQUIRE(trimmed_mean({-1.0, -2.0, -3.0}) == Approx(-2.0));
    // 4 values: exactly the single worst one is excluded
    REQUIRE(trimmed_mean({-10.0, -1.0, -2.0, -3.0}) == Approx(-2.0));
    // 8 values: two dropped
    REQUIRE(trimmed_mean({-8, -7, -1, -1, -1, -1, -1, -1}) == Approx(-1.0));
    // trimmed mean is never below the plain minimum
    const std::vector<double> vals{-5.0, -0.5, -0.25, -4.0};
    REQUIRE(trimmed_mean(vals) >= *std::min_element(vals.begin(), vals.end()));
}

TEST_CASE("defaults follow the hyperparameter tables", "[harness]") {
    const HyperParams ds = default_hypers(Algorithm::Ddpg, ScenarioKind::Static);
    REQUIRE(ds.actor_lr == Approx(2.5e-3));
    REQUIRE(ds.critic_lr == Approx(2.5e-3));
    REQUIRE(ds.batch_size == 64);
    REQUIRE(ds.buffer_capacity == 1000);
    REQUIRE(ds.gamma == Approx(0.99));
    REQUIRE(ds.tau == Approx(0.001));
    REQUIRE(ds.sigma0 == Approx(0.15));
    REQUIRE(ds.sigma_min == Approx(0.01));
    REQUIRE(ds.hidden_units == 256);
    REQUIRE(ds.hidden_layers == 2);

    const HyperParams dd = default_hypers(Algorithm::Ddpg, ScenarioKind::QuasiDynamic);
    REQUIRE(dd.actor_lr == Approx(2.5e-5));
    REQUIRE(dd.critic_lr == Approx(2.5e-4));
    REQUIRE(dd.batch_size == 252);
    REQUIRE(dd.buffer_capacity == 2000);

    const HyperParams ss = default_hypers(Algorithm::Sac, ScenarioKind::Static);
    REQUIRE(ss.actor_lr == Approx(2.5e-5));
    REQUIRE(ss.critic_lr == Approx(2.5e-4));
    REQUIRE(ss.entropy_target == Approx(-3.0));
    REQUIRE(ss.batch_size == 64);
}

TEST_CASE("config json round-trip", "[harness]") {
    ExperimentConfig cfg = tiny_static(Algorithm::Sac);
    cfg.market.scenario = ScenarioKind::QuasiDynamic;
    cfg.market.copula = copula_preset("tight_spread_stock", cfg.market.grid);
    cfg.hyper = default_hypers(Algorithm::Sac, ScenarioKind::QuasiDynamic);
    cfg.grid = {cfg.hyper};
    cfg.grid[0].critic_lr = 1e-3;
    cfg.reward_threshold = -0.5;
    cfg.gap_tolerance = 0.02;

    const nlohmann::json j = config_to_json(cfg);
    const ExperimentConfig back = config_from_json(j);
    REQUIRE(back.algorithm == Algorithm::Sac);
    REQUIRE(back.market.scenario == ScenarioKind::QuasiDynamic);
    REQUIRE(back.market.copula.mid_mean == cfg.market.copula.mid_mean);
    REQUIRE(back.market.copula.correlation == cfg.market.copula.correlation);
    REQUIRE(back.hyper.critic_lr == Approx(cfg.hyper.critic_lr));
    REQUIRE(back.grid.size() == 1);
    REQUIRE(back.grid[0].critic_lr == Approx(1e-3));
    REQUIRE(back.reward_threshold.has_value());
    REQUIRE(*back.reward_threshold == Approx(-0.5));
    REQUIRE(back.gap_tolerance == Approx(0.02));
    REQUIRE(back.seeds == cfg.seeds);
}

TEST_CASE("config parsing applies scenario-aware defaults", "[harness]") {
    const nlohmann::json j = {{"algorithm", "ddpg"},
                              {"market", {{"scenario", "quasi_dynamic"},
                                          {"copula", {{"preset", "wide_spread_stock"}}}}}};
    const ExperimentConfig cfg = config_from_json(j);
    REQUIRE(cfg.hyper.actor_lr == Approx(2.5e-5));
    REQUIRE(cfg.hyper.batch_size == 252);
    REQUIRE(cfg.hyper.buffer_capacity == 2000);
    REQUIRE(cfg.trailing_window == 50);

    REQUIRE_THROWS_AS(config_from_json(nlohmann::json{{"algorithm", "q-learning"}}), ConfigError);
    REQUIRE_THROWS_AS(
        config_from_json(nlohmann::json{
            {"market", {{"scenario", "quasi_dynamic"}}}}), // no copula block
        ConfigError);
}

TEST_CASE("single-tuple training wins trivially and sets the threshold", "[harness]") {
    const ExperimentConfig cfg = tiny_static();
    const TrainingOutcome outcome = run_training(cfg);
    REQUIRE(outcome.winning_tuple == 0);
    REQUIRE(outcome.tuple_scores.size() == 1);
    // threshold equals the best trimmed-mean eval point of the winner
    double best = -std::numeric_limits<double>::infinity();
    for (double v : outcome.tuple_curves[0]) best = std::max(best, v);
    REQUIRE(outcome.stopping_threshold == Approx(best));
    REQUIRE(outcome.bench_reference <= 0.0);
    // R0 defaults to 1.1x the benchmark reward
    REQUIRE(outcome.reward_threshold == Approx(1.1 * outcome.bench_reference));
}

TEST_CASE("training emits per-tuple curves and traces", "[harness]") {
    ExperimentConfig cfg = tiny_static();
    cfg.grid = {cfg.hyper, cfg.hyper};
    cfg.grid[1].actor_lr = 1e-3;
    const std::string dir = "harness_out_curves";
    std::filesystem::remove_all(dir);
    const TrainingOutcome outcome = run_training(cfg, dir);
    REQUIRE(outcome.tuple_curves.size() == 2);
    REQUIRE(std::filesystem::exists(dir + "/training_curves.csv"));
    REQUIRE(std::filesystem::exists(dir + "/training_summary.json"));
    REQUIRE(std::filesystem::exists(dir + "/trace_ddpg_t0_s1.csv"));
    REQUIRE(std::filesystem::exists(dir + "/trace_ddpg_t1_s2.csv"));
    const std::string header = slurp(dir + "/trace_ddpg_t0_s1.csv").substr(0, 64);
    REQUIRE(header.rfind("episode,step,r,r_det,critic_loss,actor_obj,sigma,learning_flag", 0) ==
            0);
}

TEST_CASE("training phases are byte-reproducible", "[harness]") {
    const ExperimentConfig cfg = tiny_static();
    std::filesystem::remove_all("harness_rep_a");
    std::filesystem::remove_all("harness_rep_b");
    run_training(cfg, "harness_rep_a");
    run_training(cfg, "harness_rep_b");
    for (const char* name : {"/trace_ddpg_t0_s1.csv", "/trace_ddpg_t0_s2.csv",
                             "/training_curves.csv", "/training_summary.json"}) {
        REQUIRE(slurp(std::string("harness_rep_a") + name) ==
                slurp(std::string("harness_rep_b") + name));
    }
}

TEST_CASE("validation selects by mean with first-index tie-break", "[harness]") {
    ExperimentConfig cfg = tiny_static();
    cfg.validation_seeds = {5, 5, 5}; // deliberately identical agents

    // threshold -inf: everyone succeeds, ties resolve to the first agent
    const ValidationOutcome all =
        run_validation(cfg, cfg.hyper, -std::numeric_limits<double>::infinity());
    REQUIRE(all.has_candidate);
    REQUIRE(all.best_index == 0);
    REQUIRE(all.successful == std::vector<bool>{true, true, true});
    REQUIRE(all.agent_means[0] == Approx(all.agent_means[1]));

    // unreachable threshold: explicit no-candidate result, not a crash
    const ValidationOutcome none =
        run_validation(cfg, cfg.hyper, std::numeric_limits<double>::infinity());
    REQUIRE_FALSE(none.has_candidate);
    REQUIRE(none.best_index == -1);
}

TEST_CASE("validation then testing round-trip", "[harness]") {
    ExperimentConfig cfg = tiny_static();
    cfg.validation_seeds = {3, 4};
    cfg.test_seeds = {7, 8};
    const std::string dir = "harness_out_vt";
    std::filesystem::remove_all(dir);
    const ValidationOutcome val =
        run_validation(cfg, cfg.hyper, -std::numeric_limits<double>::infinity(), dir);
    REQUIRE(val.has_candidate);
    REQUIRE(std::filesystem::exists(dir + "/best_agent.json"));

    const TestOutcome test = run_testing(cfg, val.best_checkpoint, dir);
    REQUIRE(test.seeds.size() == 2);
    // static market: one step per test episode
    REQUIRE(test.step_rewards[0].size() == 1);
    REQUIRE(test.steps_total == 2);
    REQUIRE(std::filesystem::exists(dir + "/test_steps.csv"));
    REQUIRE(std::filesystem::exists(dir + "/test_smile.csv"));
    REQUIRE(std::filesystem::exists(dir + "/test_report.json"));
    REQUIRE(std::filesystem::exists(dir + "/test_trace_s7.jsonl"));

    // episode trace lines carry state, action, reward, theta and quotes
    std::ifstream trace(dir + "/test_trace_s7.jsonl");
    std::string line;
    REQUIRE(std::getline(trace, line));
    const nlohmann::json rec = nlohmann::json::parse(line);
    for (const char* key : {"s", "a", "r", "theta", "quotes"}) REQUIRE(rec.contains(key));

    // identical rerun produces byte-identical test outputs
    const std::string dir2 = "harness_out_vt2";
    std::filesystem::remove_all(dir2);
    run_testing(cfg, val.best_checkpoint, dir2);
    REQUIRE(slurp(dir + "/test_steps.csv") == slurp(dir2 + "/test_steps.csv"));
    REQUIRE(slurp(dir + "/test_smile.csv") == slurp(dir2 + "/test_smile.csv"));
}

TEST_CASE("quasi-dynamic benchmark reference averages per-step fits", "[harness]") {
    ExperimentConfig cfg = tiny_static();
    cfg.market.scenario = ScenarioKind::QuasiDynamic;
    cfg.market.episode_steps = 5;
    cfg.market.copula = copula_preset("tight_spread_stock", cfg.market.grid);
    const double ref = benchmark_reference(cfg);
    REQUIRE(ref <= 0.0);
    REQUIRE(ref > -1.0);
    REQUIRE(benchmark_reference(cfg) == Approx(ref)); // deterministic
}

TEST_CASE("market csv has the documented columns and reproduces per seed", "[harness]") {
    ExperimentConfig cfg = tiny_static();
    cfg.market.scenario = ScenarioKind::Sequential;
    cfg.market.episode_steps = 3;
    std::ostringstream a, b;
    write_market_csv(cfg.market, 42, a);
    write_market_csv(cfg.market, 42, b);
    REQUIRE(a.str() == b.str());
    REQUIRE(a.str().rfind("step,kappa,bid,ask\n", 0) == 0);
    int lines = 0;
    std::istringstream is(a.str());
    std::string line;
    while (std::getline(is, line)) ++lines;
    REQUIRE(lines == 1 + 3 * cfg.market.grid.size());
}

TEST_CASE("seed mixing decorrelates streams", "[harness]") {
    REQUIRE(mix_seed(1, 1) != mix_seed(1, 2));
    REQUIRE(mix_seed(1, 1) != mix_seed(2, 1));
    REQUIRE(mix_seed(1, 1) == mix_seed(1, 1));
}
