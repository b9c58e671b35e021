#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "volfit/env.hpp"

namespace volfit {

/// How a full buffer makes room. RewardAware keeps the best transitions seen
/// (a new one must strictly beat the current worst reward; ties are
/// rejected); Fifo always evicts the oldest.
enum class InsertPolicy { RewardAware, Fifo };

class ReplayBuffer {
  public:
    ReplayBuffer(std::size_t capacity, InsertPolicy policy)
        : capacity_(capacity), policy_(policy) {
        data_.reserve(capacity);
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    InsertPolicy policy() const { return policy_; }
    bool ready(std::size_t batch_size) const { return data_.size() >= batch_size; }
    bool full() const { return data_.size() >= capacity_; }

    double min_reward() const {
        double m = std::numeric_limits<double>::infinity();
        for (const Transition& t : data_) m = std::min(m, t.reward);
        return m;
    }

    /// Returns whether the transition was kept.
    bool store(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
            return true;
        }
        if (policy_ == InsertPolicy::Fifo) {
            data_[fifo_head_] = std::move(t);
            fifo_head_ = (fifo_head_ + 1) % capacity_;
            return true;
        }
        std::size_t worst = 0;
        for (std::size_t i = 1; i < data_.size(); ++i)
            if (data_[i].reward < data_[worst].reward) worst = i;
        if (!(t.reward > data_[worst].reward)) return false;
        data_[worst] = std::move(t);
        return true;
    }

    /// Uniform minibatch without replacement. Empty when the buffer does not
    /// hold batch_size transitions yet, which callers treat as "skip this
    /// training step".
    std::optional<std::vector<Transition>> sample(std::size_t batch_size,
                                                  std::mt19937_64& rng) const {
        if (!ready(batch_size)) return std::nullopt;
        std::vector<std::size_t> idx(data_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::vector<Transition> batch;
        batch.reserve(batch_size);
        for (std::size_t k = 0; k < batch_size; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
            std::swap(idx[k], idx[pick(rng)]);
            batch.push_back(data_[idx[k]]);
        }
        return batch;
    }

    /// Oldest-to-newest view (meaningful for the Fifo policy).
    std::vector<const Transition*> snapshot_ordered() const {
        std::vector<const Transition*> out;
        out.reserve(data_.size());
        if (policy_ == InsertPolicy::Fifo && data_.size() == capacity_) {
            for (std::size_t i = 0; i < data_.size(); ++i)
                out.push_back(&data_[(fifo_head_ + i) % capacity_]);
        } else {
            for (const Transition& t : data_) out.push_back(&t);
        }
        return out;
    }

    const std::vector<Transition>& raw() const { return data_; }

    void dump_jsonl(std::ostream& os) const {
        for (const Transition* t : snapshot_ordered()) {
            nlohmann::json j;
            j["s"] = t->state;
            j["a"] = t->action;
            j["r"] = t->reward;
            j["s_next"] = t->next_state;
            j["done"] = t->done;
            os << j.dump() << '\n';
        }
    }

  private:
    std::size_t capacity_;
    InsertPolicy policy_;
    std::vector<Transition> data_;
    std::size_t fifo_head_ = 0;
};

} // namespace volfit
