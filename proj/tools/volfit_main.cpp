// volfit: train / validate / test the fitting agents, run the classical
// benchmark, or dump synthetic market episodes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "volfit/harness.hpp"

namespace {

using volfit::harness::ExperimentConfig;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw volfit::ConfigError("cannot open file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = volfit::harness::config_from_json(read_json_file(path));
    if (seed) cfg.seeds = {*seed};
    return cfg;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, seed);
    const auto outcome = volfit::harness::run_training(cfg, out_dir);
    std::cout << "training done: winning_tuple=" << outcome.winning_tuple
              << " stopping_threshold=" << volfit::harness::fmt_g17(outcome.stopping_threshold)
              << " bench=" << volfit::harness::fmt_g17(outcome.bench_reference) << '\n';
    return 0;
}

int run_validate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, seed);
    volfit::harness::HyperParams hypers = cfg.hyper;
    double threshold;
    const std::string summary_path = out_dir + "/training_summary.json";
    if (std::filesystem::exists(summary_path)) {
        const nlohmann::json summary = read_json_file(summary_path);
        volfit::harness::detail::apply_hyper_overrides(hypers, summary.at("winning_hypers"));
        threshold = summary.at("stopping_threshold").get<double>();
    } else if (cfg.reward_threshold) {
        threshold = *cfg.reward_threshold;
    } else {
        threshold = 1.1 * volfit::harness::benchmark_reference(cfg);
    }
    const auto outcome = volfit::harness::run_validation(cfg, hypers, threshold, out_dir);
    if (!outcome.has_candidate) {
        std::cerr << R"({"error":"no validation agent reached the threshold"})" << '\n';
        return 2;
    }
    std::cout << "validation done: best_seed=" << outcome.best_seed
              << " mean_reward=" << volfit::harness::fmt_g17(outcome.best_mean) << '\n';
    return 0;
}

int run_test(const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, seed);
    const nlohmann::json checkpoint = read_json_file(out_dir + "/best_agent.json");
    const auto outcome = volfit::harness::run_testing(cfg, checkpoint, out_dir);
    std::cout << "testing done: steps_passed=" << outcome.steps_passed << "/"
              << outcome.steps_total << '\n';
    return 0;
}

int run_bench(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, std::nullopt);
    volfit::MarketProcess process(cfg.market, seed);
    const volfit::QuoteSlice quotes = process.initial();
    const auto result =
        volfit::benchmark_fit(quotes, cfg.market.grid, cfg.reward_kind, cfg.form);
    std::cout << "theta=(" << volfit::harness::fmt_g17(result.theta[0]) << ", "
              << volfit::harness::fmt_g17(result.theta[1]) << ", "
              << volfit::harness::fmt_g17(result.theta[2]) << ")"
              << " reward=" << volfit::harness::fmt_g17(result.reward)
              << " evaluations=" << result.evaluations << '\n';
    std::filesystem::create_directories(out_dir);
    std::ofstream smile(out_dir + "/bench_smile.csv", std::ios::binary);
    smile << "kappa,mid,model_vol\n";
    const std::vector<double> model = volfit::eval_slice(result.theta, cfg.market.grid, cfg.form);
    for (int j = 0; j < cfg.market.grid.size(); ++j)
        smile << volfit::harness::fmt_g17(cfg.market.grid.kappas[j]) << ','
              << volfit::harness::fmt_g17(quotes.mid(j)) << ','
              << volfit::harness::fmt_g17(model[j]) << '\n';
    return 0;
}

int run_gen_market(const std::string& config_path, std::uint64_t seed,
                   const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path, std::nullopt);
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/market.csv", std::ios::binary);
    if (!csv) throw volfit::ConfigError("cannot write market.csv under " + out_dir);
    volfit::harness::write_market_csv(cfg.market, seed, csv);
    std::cout << "wrote " << out_dir << "/market.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volatility-slice fitting lab: RL agents vs a classical optimizer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_value = 0;
    bool seed_given = false;

    const auto add_common = [&](CLI::App* cmd, bool seed_required = false) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory");
        auto* opt = cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](std::uint64_t v) {
                seed_value = v;
                seed_given = true;
            },
            "seed override");
        if (seed_required) opt->required();
    };

    auto* train = app.add_subcommand("train", "hyperparameter grid + training phase");
    add_common(train);
    auto* validate = app.add_subcommand("validate", "train candidate agents, pick the best");
    add_common(validate);
    auto* test = app.add_subcommand("test", "deterministic test episodes of the best agent");
    add_common(test);
    auto* bench = app.add_subcommand("bench", "classical optimizer on one quote slice");
    add_common(bench);
    auto* gen = app.add_subcommand("gen-market", "write one episode of quotes as CSV");
    add_common(gen);

    CLI11_PARSE(app, argc, argv);

    const std::optional<std::uint64_t> seed =
        seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
    try {
        if (train->parsed()) return run_train(config_path, seed, out_dir);
        if (validate->parsed()) return run_validate(config_path, seed, out_dir);
        if (test->parsed()) return run_test(config_path, seed, out_dir);
        if (bench->parsed()) return run_bench(config_path, seed.value_or(9001), out_dir);
        if (gen->parsed()) return run_gen_market(config_path, seed.value_or(9001), out_dir);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        std::cerr << err.dump() << '\n';
        return 1;
    }
    return 0;
}
