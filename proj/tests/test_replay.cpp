#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <sstream>

#include "volfit/replay.hpp"

using namespace volfit;
using Catch::Approx;

namespace {

Transition make_transition(double reward, int tag = 0) {
    Transition t;
    t.state = {static_cast<double>(tag), 0.0};
    t.action = {0.0, 0.0, 0.0};
    t.reward = reward;
    t.next_state = {0.0, 0.0};
    return t;
}

} // namespace

TEST_CASE("reward-aware insertion keeps improvements only", "[replay]") {
    ReplayBuffer buf(3, InsertPolicy::RewardAware);
    REQUIRE(buf.store(make_transition(-1.0)));
    REQUIRE(buf.store(make_transition(-2.0)));
    REQUIRE(buf.store(make_transition(-3.0)));
    REQUIRE(buf.min_reward() == Approx(-3.0));

    // better than the worst: accepted, the argmin is evicted
    REQUIRE(buf.store(make_transition(-2.5)));
    REQUIRE(buf.min_reward() == Approx(-2.5));

    // worse than the worst: rejected
    REQUIRE_FALSE(buf.store(make_transition(-4.0)));
    REQUIRE(buf.min_reward() == Approx(-2.5));

    // tie with the worst: rejected (strictly greater is required)
    REQUIRE_FALSE(buf.store(make_transition(-2.5)));
    REQUIRE(buf.size() == 3);
}

TEST_CASE("fifo insertion evicts the oldest", "[replay]") {
    ReplayBuffer buf(2, InsertPolicy::Fifo);
    REQUIRE(buf.store(make_transition(-1.0, 1)));
    REQUIRE(buf.store(make_transition(-2.0, 2)));
    REQUIRE(buf.store(make_transition(-9.0, 3))); // always accepted
    const auto ordered = buf.snapshot_ordered();
    REQUIRE(ordered.size() == 2);
    REQUIRE(ordered[0]->state[0] == Approx(2.0));
    REQUIRE(ordered[1]->state[0] == Approx(3.0));
    REQUIRE(buf.size() == 2);
}

TEST_CASE("reward-aware minimum is monotone under random stores", "[replay]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(-10.0, 0.0);
    ReplayBuffer buf(64, InsertPolicy::RewardAware);

    // brute-force oracle: a plain multiset of rewards applying the rule
    std::multiset<double> oracle;
    double last_min = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100000; ++i) {
        const double r = uni(rng);
        const bool accepted = buf.store(make_transition(r));
        bool oracle_accepted;
        if (oracle.size() < 64) {
            oracle.insert(r);
            oracle_accepted = true;
        } else if (r > *oracle.begin()) {
            oracle.erase(oracle.begin());
            oracle.insert(r);
            oracle_accepted = true;
        } else {
            oracle_accepted = false;
        }
        REQUIRE(accepted == oracle_accepted);
        const double current_min = buf.min_reward();
        REQUIRE(current_min == Approx(*oracle.begin()).margin(0.0));
        if (buf.size() == buf.capacity()) {
            REQUIRE(current_min >= last_min);
            last_min = current_min;
        }
    }
}

TEST_CASE("buffer never exceeds capacity", "[replay]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1.0, 0.0);
    for (InsertPolicy policy : {InsertPolicy::RewardAware, InsertPolicy::Fifo}) {
        ReplayBuffer buf(16, policy);
        for (int i = 0; i < 1000; ++i) {
            buf.store(make_transition(uni(rng)));
            REQUIRE(buf.size() <= 16);
        }
        REQUIRE(buf.size() == 16);
    }
}

TEST_CASE("sampling is uniform without replacement", "[replay]") {
    ReplayBuffer buf(10, InsertPolicy::RewardAware);
    for (int i = 0; i < 10; ++i) buf.store(make_transition(-1.0 - i, i));

    std::mt19937_64 rng(5);

    // underfull request signals not-ready
    REQUIRE_FALSE(buf.sample(11, rng).has_value());

    // a batch of the full size is a permutation of the contents
    const auto full = buf.sample(10, rng);
    REQUIRE(full.has_value());
    std::set<int> tags;
    for (const Transition& t : *full) tags.insert(static_cast<int>(t.state[0]));
    REQUIRE(tags.size() == 10);

    // frequency check: each element within 3 sigma of uniform
    std::map<int, int> counts;
    const int trials = 100000;
    const int batch = 3;
    for (int i = 0; i < trials; ++i) {
        const auto s = buf.sample(batch, rng);
        std::set<int> seen;
        for (const Transition& t : *s) {
            const int tag = static_cast<int>(t.state[0]);
            REQUIRE(seen.insert(tag).second); // distinct within a batch
            ++counts[tag];
        }
    }
    const double p = static_cast<double>(batch) / 10.0;
    const double expected = trials * p;
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    for (const auto& [tag, count] : counts)
        REQUIRE(std::abs(count - expected) < 3.0 * sigma);
}

TEST_CASE("jsonl dump emits one record per transition", "[replay]") {
    ReplayBuffer buf(4, InsertPolicy::Fifo);
    for (int i = 0; i < 3; ++i) buf.store(make_transition(-1.0 * i, i));
    std::ostringstream os;
    buf.dump_jsonl(os);
    int lines = 0;
    std::string line;
    std::istringstream is(os.str());
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        REQUIRE(j.contains("s"));
        REQUIRE(j.contains("r"));
        ++lines;
    }
    REQUIRE(lines == 3);
}
