#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "volfit/ddpg.hpp"

using namespace volfit;
using nn::Mlp;
using Catch::Approx;

namespace {

DdpgConfig small_config() {
    DdpgConfig cfg;
    cfg.hidden_units = 32;
    cfg.batch_size = 16;
    return cfg;
}

// Exact ReLU network for Q(s, a) = -sum_i |a_i - a_star_i| + offset: each
// action coordinate feeds a relu(x) + relu(-x) pair, state inputs are
// ignored. Its action gradient points at a_star everywhere.
Mlp abs_critic(int state_dim, const Action& a_star, double offset = 0.0) {
    const int in = state_dim + kParamCount;
    Mlp net = Mlp::xavier({in, 2 * kParamCount, 1}, nn::Activation::ReLU,
                          nn::OutputHead::Linear, 1.0, 0);
    std::vector<double> p(net.param_count(), 0.0);
    const int w1 = 0;
    const int b1 = 2 * kParamCount * in;
    const int w2 = b1 + 2 * kParamCount;
    const int b2 = w2 + 2 * kParamCount;
    for (int i = 0; i < kParamCount; ++i) {
        p[w1 + (2 * i) * in + state_dim + i] = 1.0;       // relu(a_i - a*_i)
        p[b1 + 2 * i] = -a_star[i];
        p[w1 + (2 * i + 1) * in + state_dim + i] = -1.0;  // relu(a*_i - a_i)
        p[b1 + 2 * i + 1] = a_star[i];
        p[w2 + 2 * i] = -1.0;
        p[w2 + 2 * i + 1] = -1.0;
    }
    p[b2] = offset;
    net.set_params(p);
    return net;
}

Mlp constant_critic(int state_dim, double value) {
    Mlp net = Mlp::xavier({state_dim + kParamCount, 4, 1}, nn::Activation::ReLU,
                          nn::OutputHead::Linear, 1.0, 0);
    std::vector<double> p(net.param_count(), 0.0);
    p[net.param_count() - 1] = value;
    net.set_params(p);
    return net;
}

Transition make_transition(const EnvState& s, const Action& a, double r, bool done) {
    return Transition{s, a, r, s, done};
}

MarketConfig static_skew() {
    MarketConfig m;
    m.scenario = ScenarioKind::Static;
    m.shape = MarketShape::Skew;
    return m;
}

} // namespace

TEST_CASE("noise schedule endpoints and clamping", "[ddpg]") {
    DdpgAgent agent(13, small_config(), 1);
    const int total = 1000;
    REQUIRE(agent.noise_sigma(0, total) == Approx(0.15));
    REQUIRE(agent.noise_sigma(total, total) == Approx(0.01));
    // 0.15 * 0.5^4 = 0.009375 clamps to the floor
    REQUIRE(agent.noise_sigma(total / 2, total) == Approx(0.01));
    double prev = agent.noise_sigma(0, total);
    for (int n = 1; n <= total; ++n) {
        const double s = agent.noise_sigma(n, total);
        REQUIRE(s <= prev + 1e-15);
        REQUIRE(s >= 0.01);
        REQUIRE(s <= 0.15);
        prev = s;
    }
}

TEST_CASE("exploration stays inside the action bound", "[ddpg]") {
    DdpgAgent agent(13, small_config(), 2);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Action a = agent.explore_action(EnvState(13, 0.1), 0, 10, rng);
        for (double v : a) REQUIRE(std::abs(v) <= 0.5);
    }
}

TEST_CASE("critic targets are pure rewards when gamma is zero", "[ddpg]") {
    DdpgConfig cfg = small_config();
    cfg.gamma = 0.0;
    DdpgAgent agent(5, cfg, 7);
    const EnvState s(5, 0.2);
    const Action a{0.1, -0.1, 0.0};
    const double r = -0.35;
    // batch of identical transitions: loss is exactly (r - Q(s,a))^2
    const std::vector<Transition> batch(8, make_transition(s, a, r, false));
    std::vector<double> input = agent.normalizer().normalize(s);
    for (double v : a) input.push_back(v);
    const double q_before = agent.critic().forward(input)[0];
    const double loss = agent.critic_update(batch);
    REQUIRE(loss == Approx((q_before - r) * (q_before - r)).epsilon(1e-12));
}

TEST_CASE("terminal transitions never bootstrap", "[ddpg]") {
    DdpgConfig cfg = small_config();
    cfg.gamma = 0.99;
    DdpgAgent agent(5, cfg, 7);
    // make the target critic wildly biased; with done=true it must not leak
    DdpgAgent biased = DdpgAgent::from_networks(cfg, agent.actor(), constant_critic(5, 100.0));
    const EnvState s(5, 0.2);
    const Action a{0.0, 0.0, 0.0};
    const std::vector<Transition> batch(4, make_transition(s, a, -0.5, true));
    std::vector<double> input = biased.normalizer().normalize(s);
    for (double v : a) input.push_back(v);
    const double q_before = biased.critic().forward(input)[0];
    const double loss = biased.critic_update(batch);
    REQUIRE(loss == Approx((q_before + 0.5) * (q_before + 0.5)).epsilon(1e-9));
}

TEST_CASE("critic fits a frozen static buffer", "[ddpg]") {
    // static one-step episodes: all targets are rewards, so the critic is a
    // plain regression of r(s, a) on a fixed dataset
    FittingEnv env(static_skew(), RewardKind::Mse, ParamForm::Quadratic, 5);
    DdpgConfig cfg = small_config();
    cfg.hidden_units = 64;
    cfg.batch_size = 32;
    cfg.critic_lr = 1e-3;
    DdpgAgent agent(env.state_dim(), cfg, 11);

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    std::vector<Transition> data;
    for (int i = 0; i < 256; ++i) {
        const EnvState s = env.reset();
        const Action a{uni(rng), uni(rng), uni(rng)};
        const StepResult res = env.step(a);
        data.push_back({s, a, res.reward, res.state, res.done});
    }
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (int step = 0; step < 4000; ++step) {
        std::vector<Transition> batch;
        for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(data[pick(rng)]);
        agent.critic_update(batch);
    }
    double mse = 0.0;
    for (const Transition& t : data) {
        std::vector<double> input = agent.normalizer().normalize(t.state);
        for (double v : t.action) input.push_back(v);
        const double q = agent.critic().forward(input)[0];
        mse += (q - t.reward) * (q - t.reward);
    }
    mse /= data.size();
    REQUIRE(mse < 1e-3);
}

TEST_CASE("actor climbs a hand-built critic to its optimum", "[ddpg]") {
    const int state_dim = 4;
    const Action a_star{0.2, -0.3, 0.1};
    DdpgConfig cfg = small_config();
    // the abs critic has constant-magnitude action gradients, so the Adam
    // iterate oscillates around a_star with amplitude ~ lr * fan-in
    cfg.actor_lr = 2.5e-4;
    DdpgAgent agent = DdpgAgent::from_networks(
        cfg,
        Mlp::xavier({state_dim, 32, kParamCount}, nn::Activation::ReLU,
                    nn::OutputHead::ScaledTanh, cfg.action_bound, 3),
        abs_critic(state_dim, a_star));

    const EnvState s(state_dim, 0.3);
    const std::vector<Transition> batch(8, make_transition(s, {0.0, 0.0, 0.0}, -0.1, true));
    for (int i = 0; i < 8000; ++i) agent.actor_update(batch);
    const Action reached = agent.act(s);
    for (int i = 0; i < kParamCount; ++i) REQUIRE(std::abs(reached[i] - a_star[i]) < 0.01);
}

TEST_CASE("constant critic leaves the actor unchanged", "[ddpg]") {
    const int state_dim = 4;
    DdpgConfig cfg = small_config();
    DdpgAgent agent = DdpgAgent::from_networks(
        cfg,
        Mlp::xavier({state_dim, 16, kParamCount}, nn::Activation::ReLU,
                    nn::OutputHead::ScaledTanh, cfg.action_bound, 9),
        constant_critic(state_dim, 2.5));
    const std::vector<double> before(agent.actor().params().begin(),
                                     agent.actor().params().end());
    const EnvState s(state_dim, -0.2);
    const std::vector<Transition> batch(4, make_transition(s, {0.0, 0.0, 0.0}, -0.1, true));
    const double objective = agent.actor_update(batch);
    REQUIRE(objective == Approx(2.5));
    REQUIRE(std::vector<double>(agent.actor().params().begin(), agent.actor().params().end()) ==
            before);
}

TEST_CASE("actor objective equals the batch-mean critic value", "[ddpg]") {
    DdpgConfig cfg = small_config();
    DdpgAgent agent(6, cfg, 21);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Transition> batch;
    for (int i = 0; i < 12; ++i) {
        EnvState s(6);
        for (double& v : s) v = uni(rng);
        batch.push_back(make_transition(s, {0.0, 0.0, 0.0}, -0.2, true));
    }
    // recompute mean Q(s, pi(s)) independently before the update
    double expected = 0.0;
    for (const Transition& t : batch) {
        const std::vector<double> sn = agent.normalizer().normalize(t.state);
        const Action a = agent.act(t.state);
        std::vector<double> input = sn;
        for (double v : a) input.push_back(v);
        expected += agent.critic().forward(input)[0];
    }
    expected /= batch.size();
    const double objective = agent.actor_update(batch);
    REQUIRE(objective == Approx(expected).margin(1e-12));
}

TEST_CASE("target networks follow the polyak recursion exactly", "[ddpg]") {
    DdpgConfig cfg = small_config();
    DdpgAgent agent(5, cfg, 33);
    const std::vector<Transition> batch(cfg.batch_size,
                                        make_transition(EnvState(5, 0.1), {0.1, 0.0, -0.1},
                                                        -0.4, true));
    const std::vector<double> target_before(agent.target_critic().params().begin(),
                                            agent.target_critic().params().end());
    agent.critic_update(batch);
    const std::vector<double> online_after(agent.critic().params().begin(),
                                           agent.critic().params().end());
    agent.update_targets();
    for (std::size_t i = 0; i < target_before.size(); i += 97) {
        const double expected = cfg.tau * online_after[i] + (1.0 - cfg.tau) * target_before[i];
        REQUIRE(agent.target_critic().params()[i] == Approx(expected).margin(1e-15));
    }
}

TEST_CASE("learning gate semantics", "[ddpg]") {
    MarketConfig market = static_skew();
    FittingEnv env(market, RewardKind::Mse, ParamForm::Quadratic, 5);
    ReplayBuffer buffer(64, InsertPolicy::RewardAware);
    std::mt19937_64 rng(6);

    // threshold -inf: the gate closes after the very first step and the
    // agent never trains again
    DdpgConfig cfg = small_config();
    cfg.reward_threshold = -std::numeric_limits<double>::infinity();
    DdpgAgent agent(env.state_dim(), cfg, 4);
    EpisodeLog log = agent.train_episode(env, buffer, 0, 10, rng);
    REQUIRE_FALSE(agent.learning());
    REQUIRE(log.learning.back() == 0);

    // gate closed: buffer still grows, parameters stay bit-identical
    const std::uint64_t hash_before = agent.param_hash();
    const std::size_t buffer_before = buffer.size();
    for (int n = 1; n < 40; ++n) agent.train_episode(env, buffer, n, 10, rng);
    REQUIRE(agent.param_hash() == hash_before);
    REQUIRE(buffer.size() >= buffer_before);
}

TEST_CASE("deterministic evaluation leaves the agent untouched", "[ddpg]") {
    FittingEnv env(static_skew(), RewardKind::Mse, ParamForm::Quadratic, 5);
    DdpgAgent agent(env.state_dim(), small_config(), 8);
    const std::uint64_t hash_before = agent.param_hash();
    const auto count_before = agent.normalizer().count();
    const EnvState s = env.reset();
    const Action a1 = agent.act(s);
    const Action a2 = agent.act(s);
    REQUIRE(a1 == a2);
    REQUIRE(agent.param_hash() == hash_before);
    REQUIRE(agent.normalizer().count() == count_before);
}

TEST_CASE("checkpoint round-trip preserves behavior", "[ddpg]") {
    FittingEnv env(static_skew(), RewardKind::Mse, ParamForm::Quadratic, 5);
    DdpgConfig cfg = small_config();
    cfg.reward_threshold = std::numeric_limits<double>::infinity();
    DdpgAgent agent(env.state_dim(), cfg, 10);
    ReplayBuffer buffer(128, InsertPolicy::RewardAware);
    std::mt19937_64 rng(11);
    for (int n = 0; n < 30; ++n) agent.train_episode(env, buffer, n, 30, rng);

    const nlohmann::json j = agent.to_json();
    const DdpgAgent restored = DdpgAgent::from_json(j, cfg);
    const EnvState s = env.reset();
    REQUIRE(restored.act(s) == agent.act(s));
    REQUIRE(restored.param_hash() == agent.param_hash());
}

TEST_CASE("ou noise follows the footnote discretization", "[ddpg]") {
    DdpgConfig cfg = small_config();
    cfg.noise = NoiseKind::OrnsteinUhlenbeck;
    DdpgAgent agent(4, cfg, 12);
    std::mt19937_64 rng(9);
    // successive OU draws are autocorrelated: consecutive noise increments
    // share the mean-reverting state, unlike iid Gaussian draws
    const EnvState s(4, 0.0);
    std::vector<double> path;
    for (int i = 0; i < 2000; ++i) path.push_back(agent.explore_action(s, 0, 10, rng)[0]);
    double lag1 = 0.0, var = 0.0, mean = 0.0;
    for (double v : path) mean += v;
    mean /= path.size();
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        lag1 += (path[i] - mean) * (path[i + 1] - mean);
        var += (path[i] - mean) * (path[i] - mean);
    }
    REQUIRE(lag1 / var > 0.5); // strong positive autocorrelation
}
