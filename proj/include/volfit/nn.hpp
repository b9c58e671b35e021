#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volfit/detail/matops.hpp"
#include "volfit/errors.hpp"

namespace volfit::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoints store little-endian doubles");

enum class Activation { ReLU, Tanh };
enum class OutputHead { Linear, ScaledTanh };

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

namespace detail {

inline std::string hex_encode(std::span<const double> values) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(values.size() * 16);
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            const unsigned byte = (bits >> (8 * b)) & 0xffu;
            out.push_back(digits[byte >> 4]);
            out.push_back(digits[byte & 0xfu]);
        }
    }
    return out;
}

inline std::vector<double> hex_decode(const std::string& hex) {
    if (hex.size() % 16 != 0) throw CheckpointError("hex payload length is not a multiple of 16");
    const auto nibble = [](char c) -> std::uint64_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(c - 'a' + 10);
        throw CheckpointError("invalid hex digit in checkpoint");
    };
    std::vector<double> out(hex.size() / 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            const std::uint64_t hi = nibble(hex[16 * i + 2 * b]);
            const std::uint64_t lo = nibble(hex[16 * i + 2 * b + 1]);
            bits |= ((hi << 4) | lo) << (8 * b);
        }
        double v;
        std::memcpy(&v, &bits, sizeof v);
        out[i] = v;
    }
    return out;
}

} // namespace detail

/// Fully-connected network with element-wise hidden activations and an
/// affine output layer (optionally squashed through tanh and scaled, for
/// bounded policy outputs). Parameters, Adam moments and the step counter
/// live in flat arrays; gradients use the same layout.
///
/// The batched forward keeps the batch in matrix columns; see
/// detail/matops.hpp for the kernels.
class Mlp {
  public:
    using Mat = detail::Mat;

    struct Grads {
        std::vector<double> flat;
    };

    struct Cache {
        Mat input;
        std::vector<Mat> pre;  // affine outputs per layer
        std::vector<Mat> post; // activations per layer (post[last] is the output)
        std::uint64_t version = 0;
    };

    Mlp() = default;

    static Mlp xavier(std::vector<int> dims, Activation hidden, OutputHead head,
                      double head_scale, std::uint64_t seed) {
        if (dims.size() < 2) throw ShapeError("network needs at least input and output dims");
        Mlp net;
        net.dims_ = std::move(dims);
        net.hidden_ = hidden;
        net.head_ = head;
        net.head_scale_ = head_scale;
        net.init_layout();
        std::mt19937_64 rng(seed);
        for (std::size_t k = 1; k < net.dims_.size(); ++k) {
            const int din = net.dims_[k - 1];
            const int dout = net.dims_[k];
            const double bound = std::sqrt(6.0 / static_cast<double>(din + dout));
            std::uniform_real_distribution<double> uni(-bound, bound);
            double* w = net.params_.data() + net.w_off_[k - 1];
            for (int i = 0; i < dout * din; ++i) w[i] = uni(rng);
            // biases stay zero
        }
        return net;
    }

    const std::vector<int>& dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    Activation hidden_activation() const { return hidden_; }
    OutputHead head() const { return head_; }
    double head_scale() const { return head_scale_; }
    std::uint64_t version() const { return version_; }
    std::int64_t adam_steps() const { return adam_step_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<const double> params() const { return params_; }

    void set_params(std::span<const double> p) {
        if (p.size() != params_.size()) throw ShapeError("parameter size mismatch");
        std::copy(p.begin(), p.end(), params_.begin());
        ++version_;
    }

    std::vector<double> forward(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != input_dim()) throw ShapeError("input dimension mismatch");
        std::vector<double> a(x.begin(), x.end());
        std::vector<double> z;
        for (std::size_t k = 1; k < dims_.size(); ++k) {
            const int m = dims_[k];
            const int n = dims_[k - 1];
            const double* w = params_.data() + w_off_[k - 1];
            const double* b = params_.data() + b_off_[k - 1];
            z.assign(m, 0.0);
            for (int i = 0; i < m; ++i)
                z[i] = detail::dot4(w + static_cast<std::size_t>(i) * n, a.data(), n) + b[i];
            const bool last = k + 1 == dims_.size();
            if (!last) {
                for (double& v : z) v = activate(v);
            } else if (head_ == OutputHead::ScaledTanh) {
                for (double& v : z) v = head_scale_ * std::tanh(v);
            }
            a.swap(z);
        }
        return a;
    }

    /// X is (input_dim x batch). Returns the (output_dim x batch) activations;
    /// fills `cache` when a backward pass will follow.
    Mat forward_batch(const Mat& x, Cache* cache = nullptr) const {
        if (x.rows != input_dim()) throw ShapeError("input dimension mismatch");
        const int batch = x.cols;
        if (cache) {
            cache->input = x;
            cache->pre.clear();
            cache->post.clear();
            cache->version = version_;
        }
        Mat a = x;
        for (std::size_t k = 1; k < dims_.size(); ++k) {
            const int m = dims_[k];
            const double* w = params_.data() + w_off_[k - 1];
            const double* b = params_.data() + b_off_[k - 1];
            Mat z(m, batch);
            for (int i = 0; i < m; ++i) {
                double* zi = z.row(i);
                for (int c = 0; c < batch; ++c) zi[c] = b[i];
            }
            detail::mul_acc(w, m, dims_[k - 1], a, z);
            if (cache) cache->pre.push_back(z);
            const bool last = k + 1 == dims_.size();
            if (!last) {
                for (double& v : z.a) v = activate(v);
            } else if (head_ == OutputHead::ScaledTanh) {
                for (double& v : z.a) v = head_scale_ * std::tanh(v);
            }
            if (cache) cache->post.push_back(z);
            a = std::move(z);
        }
        return a;
    }

    /// Reverse-mode pass for the batch recorded in `cache`. `d_out` holds
    /// dLoss/dOutput per sample (already including any 1/batch factor).
    /// Parameter gradients accumulate into `grads` when non-null; the
    /// gradient w.r.t. the network input lands in `d_input` when non-null.
    void backward_batch(const Cache& cache, const Mat& d_out, Grads* grads,
                        Mat* d_input = nullptr) const {
        if (cache.version != version_)
            throw CacheError("forward cache is stale; parameters changed since the pass");
        if (d_out.rows != output_dim() || d_out.cols != cache.input.cols)
            throw ShapeError("output gradient dimension mismatch");
        if (grads && grads->flat.size() != params_.size())
            grads->flat.assign(params_.size(), 0.0);

        const int layers = static_cast<int>(dims_.size()) - 1;
        Mat dz = d_out;
        if (head_ == OutputHead::ScaledTanh) {
            const Mat& out = cache.post.back();
            for (std::size_t i = 0; i < dz.a.size(); ++i)
                dz.a[i] *= head_scale_ - out.a[i] * out.a[i] / head_scale_;
        }
        for (int k = layers; k >= 1; --k) {
            const Mat& a_prev = k >= 2 ? cache.post[k - 2] : cache.input;
            if (grads) {
                detail::outer_acc(dz, a_prev, grads->flat.data() + w_off_[k - 1]);
                double* db = grads->flat.data() + b_off_[k - 1];
                for (int i = 0; i < dz.rows; ++i) {
                    const double* di = dz.row(i);
                    double s0 = 0.0;
                    for (int c = 0; c < dz.cols; ++c) s0 += di[c];
                    db[i] += s0;
                }
            }
            const bool need_below = k >= 2 || d_input != nullptr;
            if (!need_below) break;
            Mat da(dims_[k - 1], dz.cols);
            detail::mul_trans_acc(params_.data() + w_off_[k - 1], dims_[k], dims_[k - 1], dz, da);
            if (k >= 2) {
                const Mat& pre = cache.pre[k - 2];
                const Mat& post = cache.post[k - 2];
                if (hidden_ == Activation::ReLU) {
                    // subgradient 1 at exactly zero: zero-bias Xavier layers
                    // fed all-zero (normalized-constant) states would
                    // otherwise never receive any gradient
                    for (std::size_t i = 0; i < da.a.size(); ++i)
                        if (pre.a[i] < 0.0) da.a[i] = 0.0;
                } else {
                    for (std::size_t i = 0; i < da.a.size(); ++i)
                        da.a[i] *= 1.0 - post.a[i] * post.a[i];
                }
                dz = std::move(da);
            } else {
                *d_input = std::move(da);
            }
        }
    }

    void adam_step(const Grads& grads, const AdamConfig& cfg) {
        if (grads.flat.size() != params_.size()) throw ShapeError("gradient size mismatch");
        if (adam_m_.empty()) {
            adam_m_.assign(params_.size(), 0.0);
            adam_v_.assign(params_.size(), 0.0);
        }
        ++adam_step_;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_step_));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const double g = grads.flat[i];
            adam_m_[i] = cfg.beta1 * adam_m_[i] + (1.0 - cfg.beta1) * g;
            adam_v_[i] = cfg.beta2 * adam_v_[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = adam_m_[i] / c1;
            const double vhat = adam_v_[i] / c2;
            params_[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        ++version_;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dims"] = dims_;
        j["hidden_activation"] = hidden_ == Activation::ReLU ? "relu" : "tanh";
        j["head"] = head_ == OutputHead::Linear ? "linear" : "scaled_tanh";
        j["head_scale"] = head_scale_;
        j["params"] = detail::hex_encode(params_);
        j["adam_m"] = detail::hex_encode(adam_m_);
        j["adam_v"] = detail::hex_encode(adam_v_);
        j["adam_step"] = adam_step_;
        return j;
    }

    static Mlp from_json(const nlohmann::json& j) {
        Mlp net;
        try {
            net.dims_ = j.at("dims").get<std::vector<int>>();
            const std::string act = j.at("hidden_activation").get<std::string>();
            net.hidden_ = act == "relu" ? Activation::ReLU : Activation::Tanh;
            const std::string head = j.at("head").get<std::string>();
            net.head_ = head == "linear" ? OutputHead::Linear : OutputHead::ScaledTanh;
            net.head_scale_ = j.at("head_scale").get<double>();
            net.init_layout();
            net.params_ = detail::hex_decode(j.at("params").get<std::string>());
            net.adam_m_ = detail::hex_decode(j.at("adam_m").get<std::string>());
            net.adam_v_ = detail::hex_decode(j.at("adam_v").get<std::string>());
            net.adam_step_ = j.at("adam_step").get<std::int64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError(std::string("malformed network checkpoint: ") + e.what());
        }
        if (net.params_.size() != net.total_params_)
            throw CheckpointError("checkpoint parameter count does not match dims");
        if (!net.adam_m_.empty() &&
            (net.adam_m_.size() != net.total_params_ || net.adam_v_.size() != net.total_params_))
            throw CheckpointError("checkpoint Adam moment count does not match dims");
        return net;
    }

    friend void polyak_update(Mlp& target, const Mlp& online, double tau);

  private:
    void init_layout() {
        w_off_.clear();
        b_off_.clear();
        std::size_t off = 0;
        for (std::size_t k = 1; k < dims_.size(); ++k) {
            if (dims_[k] <= 0 || dims_[k - 1] <= 0) throw ShapeError("layer dims must be positive");
            w_off_.push_back(off);
            off += static_cast<std::size_t>(dims_[k]) * dims_[k - 1];
            b_off_.push_back(off);
            off += static_cast<std::size_t>(dims_[k]);
        }
        total_params_ = off;
        params_.assign(off, 0.0);
    }

    double activate(double v) const {
        return hidden_ == Activation::ReLU ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    }

    std::vector<int> dims_;
    Activation hidden_ = Activation::ReLU;
    OutputHead head_ = OutputHead::Linear;
    double head_scale_ = 1.0;
    std::vector<double> params_;
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    std::vector<std::size_t> w_off_;
    std::vector<std::size_t> b_off_;
    std::size_t total_params_ = 0;
    std::int64_t adam_step_ = 0;
    std::uint64_t version_ = 0;
};

/// target <- tau * online + (1 - tau) * target
inline void polyak_update(Mlp& target, const Mlp& online, double tau) {
    if (target.dims_ != online.dims_) throw ShapeError("polyak update across different topologies");
    for (std::size_t i = 0; i < target.params_.size(); ++i)
        target.params_[i] = tau * online.params_[i] + (1.0 - tau) * target.params_[i];
    ++target.version_;
}

/// Adam in one dimension, used for the SAC temperature variable.
struct ScalarAdam {
    double m = 0.0;
    double v = 0.0;
    std::int64_t step = 0;

    double delta(double g, const AdamConfig& cfg) {
        ++step;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
        const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
        return -cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
};

} // namespace volfit::nn
