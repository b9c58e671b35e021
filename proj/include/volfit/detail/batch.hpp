#pragma once

#include <cstdint>
#include <vector>

#include "volfit/detail/matops.hpp"
#include "volfit/env.hpp"

namespace volfit::detail {

using nn::detail::Mat;

/// Minibatch rearranged into feature-major matrices (batch in columns).
/// States are normalized with the stats current at sampling time.
struct BatchView {
    Mat states;
    Mat actions;
    Mat next_states;
    std::vector<double> rewards;
    std::vector<std::uint8_t> done;
    int size = 0;
};

inline BatchView make_batch_view(const std::vector<Transition>& batch,
                                 const StateNormalizer& norm) {
    BatchView v;
    v.size = static_cast<int>(batch.size());
    const int sdim = static_cast<int>(batch.front().state.size());
    v.states = Mat(sdim, v.size);
    v.next_states = Mat(sdim, v.size);
    v.actions = Mat(kParamCount, v.size);
    v.rewards.resize(v.size);
    v.done.resize(v.size);
    for (int b = 0; b < v.size; ++b) {
        const EnvState s = norm.normalize(batch[b].state);
        const EnvState sn = norm.normalize(batch[b].next_state);
        for (int i = 0; i < sdim; ++i) {
            v.states.at(i, b) = s[i];
            v.next_states.at(i, b) = sn[i];
        }
        for (int i = 0; i < kParamCount; ++i) v.actions.at(i, b) = batch[b].action[i];
        v.rewards[b] = batch[b].reward;
        v.done[b] = batch[b].done ? 1 : 0;
    }
    return v;
}

inline Mat concat_rows(const Mat& top, const Mat& bottom) {
    Mat out(top.rows + bottom.rows, top.cols);
    std::copy(top.a.begin(), top.a.end(), out.a.begin());
    std::copy(bottom.a.begin(), bottom.a.end(), out.a.begin() + top.a.size());
    return out;
}

inline Mat slice_rows(const Mat& m, int first, int count) {
    Mat out(count, m.cols);
    std::copy(m.row(first), m.row(first) + static_cast<std::size_t>(count) * m.cols,
              out.a.begin());
    return out;
}

} // namespace volfit::detail
