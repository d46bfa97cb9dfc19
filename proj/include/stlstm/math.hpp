#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stlstm/errors.hpp"

namespace stlstm {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_)
            throw DimensionError("Matrix: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                 " needs " + std::to_string(rows_ * cols_) + " values, got " +
                                 std::to_string(values_.size()));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t k = 0; k < n; ++k) m(k, k) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

namespace detail {

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
}

} // namespace detail

/// W·x + b
inline Vector affine(const Matrix& W, std::span<const double> b, std::span<const double> x) {
    detail::require_dim(x.size(), W.cols(), "affine: W.cols vs dim(x)");
    detail::require_dim(b.size(), W.rows(), "affine: W.rows vs dim(b)");
    Vector y(W.rows());
    for (std::size_t r = 0; r < W.rows(); ++r) {
        const double* w = W.row(r).data();
        double acc = 0.0;
        for (std::size_t c = 0; c < W.cols(); ++c) acc += w[c] * x[c];
        y[r] = acc + b[r];
    }
    return y;
}

/// out += Wᵀ·g, restricted to the column block [col_begin, col_begin + out.size()).
inline void add_transposed_product(const Matrix& W, std::span<const double> g, std::span<double> out,
                                   std::size_t col_begin = 0) {
    detail::require_dim(g.size(), W.rows(), "add_transposed_product: W.rows vs dim(g)");
    if (col_begin + out.size() > W.cols())
        throw DimensionError("add_transposed_product: column block exceeds W.cols");
    for (std::size_t r = 0; r < W.rows(); ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* w = W.row(r).data() + col_begin;
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[c] * gr;
    }
}

/// G += g·xᵀ
inline void add_outer_product(Matrix& G, std::span<const double> g, std::span<const double> x) {
    detail::require_dim(g.size(), G.rows(), "add_outer_product: rows");
    detail::require_dim(x.size(), G.cols(), "add_outer_product: cols");
    for (std::size_t r = 0; r < G.rows(); ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        double* out = G.row(r).data();
        for (std::size_t c = 0; c < x.size(); ++c) out[c] += gr * x[c];
    }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Vector sigmoid(std::span<const double> z) {
    Vector out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [](double v) { return sigmoid(v); });
    return out;
}

inline Vector tanh(std::span<const double> z) {
    Vector out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [](double v) { return std::tanh(v); });
    return out;
}

/// Elementwise exp(-lambda·z²). Peaks at 1 for z = 0.
inline Vector gaussian_response(std::span<const double> z, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("gaussian_response: lambda must be > 0, got " + std::to_string(lambda));
    Vector out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [lambda](double v) { return std::exp(-lambda * v * v); });
    return out;
}

/// Max-subtracted softmax.
inline Vector softmax(std::span<const double> z) {
    Vector out(z.size());
    if (z.empty()) return out;
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        out[k] = std::exp(z[k] - peak);
        total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
}

/// log(softmax(z)), computed without forming the probabilities first.
inline Vector log_softmax(std::span<const double> z) {
    Vector out(z.size());
    if (z.empty()) return out;
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] - log_norm;
    return out;
}

inline Vector concat(std::initializer_list<std::span<const double>> parts) {
    std::size_t n = 0;
    for (auto p : parts) n += p.size();
    Vector out;
    out.reserve(n);
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace stlstm
