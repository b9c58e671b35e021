#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace volfit::nn::detail {

/// Row-major matrix. In batched network passes the batch index lives in the
/// columns, so every feature row is contiguous across samples and the hot
/// loops below stay unit-stride.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

inline void axpy(double* y, const double* x, double alpha, int len) {
    for (int i = 0; i < len; ++i) y[i] += alpha * x[i];
}

/// Dot product with four independent accumulators and a fixed summation
/// order, so results are bit-reproducible run to run.
inline double dot4(const double* x, const double* y, int len) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= len; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < len; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

/// C (m x B) += W (m x n) . X (n x B)
inline void mul_acc(const double* w, int m, int n, const Mat& x, Mat& c) {
    for (int i = 0; i < m; ++i) {
        const double* wi = w + static_cast<std::size_t>(i) * n;
        double* ci = c.row(i);
        for (int j = 0; j < n; ++j) axpy(ci, x.row(j), wi[j], x.cols);
    }
}

/// C (n x B) += W^T . D (m x B), with W stored (m x n)
inline void mul_trans_acc(const double* w, int m, int n, const Mat& d, Mat& c) {
    for (int i = 0; i < m; ++i) {
        const double* wi = w + static_cast<std::size_t>(i) * n;
        const double* di = d.row(i);
        for (int j = 0; j < n; ++j) axpy(c.row(j), di, wi[j], d.cols);
    }
}

/// G (m x n) += D (m x B) . X (n x B)^T  -- the weight-gradient contraction
inline void outer_acc(const Mat& d, const Mat& x, double* g) {
    for (int i = 0; i < d.rows; ++i) {
        const double* di = d.row(i);
        double* gi = g + static_cast<std::size_t>(i) * x.rows;
        for (int j = 0; j < x.rows; ++j) gi[j] += dot4(di, x.row(j), d.cols);
    }
}

} // namespace volfit::nn::detail
