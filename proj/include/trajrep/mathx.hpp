#ifndef TRAJREP_MATHX_HPP
#define TRAJREP_MATHX_HPP

#include <Eigen/Dense>

#include <cmath>

#include "trajrep/common.hpp"

namespace trajrep {

inline constexpr double kLeakySlope = 0.2;

template <typename Derived>
auto leaky_relu(const Eigen::MatrixBase<Derived>& x, double slope = kLeakySlope) {
    return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline double leaky_relu_grad(double x, double slope = kLeakySlope) {
    return x > 0.0 ? 1.0 : slope;
}

template <typename Derived>
auto elu(const Eigen::MatrixBase<Derived>& x) {
    return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

/// ELU derivative expressed through the activation output (exp(x) = y + 1 for x <= 0).
inline double elu_grad_from_output(double y) { return y > 0.0 ? 1.0 : y + 1.0; }

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(0.0);
}

/// Row-wise softmax, numerically stabilized. Modifies in place.
inline void softmax_rows_inplace(Mat& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - mx).exp();
        m.row(i) /= m.row(i).sum();
    }
}

/// Softmax over a contiguous slice of a vector, in place.
inline void softmax_span_inplace(double* v, Index n) {
    Eigen::Map<Vec> seg(v, n);
    const double mx = seg.maxCoeff();
    seg = (seg.array() - mx).exp();
    seg /= seg.sum();
}

/// Fixed sinusoidal positional encoding, rows = positions 0..len-1.
inline Mat sinusoidal_positions(Index len, Index dim) {
    Mat pe(len, dim);
    for (Index pos = 0; pos < len; ++pos) {
        for (Index k = 0; k < dim; k += 2) {
            const double angle = static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(k) / static_cast<double>(dim));
            pe(pos, k) = std::sin(angle);
            if (k + 1 < dim) pe(pos, k + 1) = std::cos(angle);
        }
    }
    return pe;
}

/// Glorot-uniform initialization in-place: U(-b, b), b = sqrt(6/(fan_in+fan_out)).
inline void glorot_init(Mat& w, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            w(i, j) = rng.uniform(-bound, bound);
}

/// Column z-scoring with population standard deviation; constant columns map to zero.
inline void zscore_columns_inplace(Mat& m) {
    for (Index j = 0; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        const double var = (m.col(j).array() - mean).square().mean();
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            m.col(j) = (m.col(j).array() - mean) / sd;
        } else {
            m.col(j).setZero();
        }
    }
}

} // namespace trajrep

#endif // TRAJREP_MATHX_HPP
