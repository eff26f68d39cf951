#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hypercl/error.hpp"

namespace hypercl {

/// Dense real vector. Storage is always 64-bit.
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    explicit Vector(std::vector<double> data) : data_(std::move(data)) {}
    Vector(std::initializer_list<double> values) : data_(values) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool all_finite() const noexcept {
        for (double x : data_) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

/// Dense row-major real matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                                 " does not match shape " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const noexcept {
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
    detail::require_same_dim(a.size(), b.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double dot(const Vector& a, const Vector& b) { return dot(a.values(), b.values()); }

inline double norm(std::span<const double> a) {
    double acc = 0.0;
    for (double x : a) acc += x * x;
    return std::sqrt(acc);
}

inline double norm(const Vector& a) { return norm(a.values()); }

/// dot(a,b) / (|a| |b|). Throws DomainError on a zero-norm operand.
inline double cosine_similarity(const Vector& a, const Vector& b) {
    detail::require_same_dim(a.dim(), b.dim(), "cosine_similarity");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

inline Vector matvec(const Matrix& m, std::span<const double> v) {
    detail::require_same_dim(m.cols(), v.size(), "matvec");
    Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

inline Vector matvec(const Matrix& m, const Vector& v) { return matvec(m, v.values()); }

/// m^T v
inline Vector matvec_transposed(const Matrix& m, std::span<const double> v) {
    detail::require_same_dim(m.rows(), v.size(), "matvec_transposed");
    Vector out(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double vr = v[r];
        if (vr == 0.0) continue;
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
    }
    return out;
}

/// m += alpha * a b^T
inline void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b,
                      double alpha = 1.0) {
    detail::require_same_dim(m.rows(), a.size(), "add_outer rows");
    detail::require_same_dim(m.cols(), b.size(), "add_outer cols");
    auto data = m.values();
    for (std::size_t r = 0; r < a.size(); ++r) {
        const double ar = alpha * a[r];
        if (ar == 0.0) continue;
        double* row = data.data() + r * m.cols();
        for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    detail::require_same_dim(a.cols(), b.rows(), "matmul");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

/// a^T b
inline Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
    detail::require_same_dim(a.rows(), b.rows(), "matmul_transposed_lhs");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
        }
    }
    return out;
}

/// a b^T
inline Matrix matmul_transposed_rhs(const Matrix& a, const Matrix& b) {
    detail::require_same_dim(a.cols(), b.cols(), "matmul_transposed_rhs");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
}

inline double frobenius_norm(const Matrix& m) { return norm(m.values()); }

/// |M|_F / sqrt(valid_elements)
inline double frobenius_norm_normalized(const Matrix& m, std::size_t valid_elements) {
    if (valid_elements == 0) throw DomainError("frobenius_norm_normalized: valid_elements must be > 0");
    return frobenius_norm(m) / std::sqrt(static_cast<double>(valid_elements));
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("mean: empty list");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population variance (divides by n).
inline double variance(std::span<const double> xs) {
    const double mu = mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return acc / static_cast<double>(xs.size());
}

inline Vector add(const Vector& a, const Vector& b) {
    detail::require_same_dim(a.dim(), b.dim(), "add");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Vector scaled(const Vector& a, double s) {
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * s;
    return out;
}

inline Vector normalized(const Vector& a) {
    const double n = norm(a);
    if (n == 0.0) throw DomainError("normalized: zero-norm input");
    return scaled(a, 1.0 / n);
}

/// Gradient of cosine(a, b) with respect to a and b, scaled by `upstream`.
/// Accumulates into grad_a / grad_b (either may be null).
inline void cosine_backward(const Vector& a, const Vector& b, double upstream, Vector* grad_a,
                            Vector* grad_b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_backward: zero-norm input");
    const double cos = dot(a, b) / (na * nb);
    const double inv = 1.0 / (na * nb);
    if (grad_a) {
        const double ka = cos / (na * na);
        for (std::size_t i = 0; i < a.dim(); ++i) (*grad_a)[i] += upstream * (b[i] * inv - a[i] * ka);
    }
    if (grad_b) {
        const double kb = cos / (nb * nb);
        for (std::size_t i = 0; i < b.dim(); ++i) (*grad_b)[i] += upstream * (a[i] * inv - b[i] * kb);
    }
}

/// log(sum(exp(xs))) with max-shift.
inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("log_sum_exp: empty input");
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

}  // namespace hypercl
