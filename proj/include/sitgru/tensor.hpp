// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sitgru/error.hpp"

namespace sitgru {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles with an explicit shape.
///
/// Rank-1 tensors of length n take part in matrix products as 1 x n rows,
/// which is how a single sample is represented in a batch-major layout.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        for (std::size_t d : shape_) {
            if (d == 0) throw DimensionError("tensor dimension must be positive, got " + shape_string(shape_));
        }
        data_.assign(element_count(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != element_count(shape_)) {
            throw DimensionError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                                 std::to_string(data_.size()) + " values");
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor vector(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<double> values;
        const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& row : rows) {
            if (row.size() != cols) throw DimensionError("ragged matrix literal");
            values.insert(values.end(), row.begin(), row.end());
        }
        return Tensor({rows.size(), cols}, std::move(values));
    }
    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Matrix view: rank-1 is a single row, rank-2 is itself. Higher ranks fold
    // trailing dimensions into columns.
    std::size_t rows() const noexcept { return shape_.size() <= 1 ? (shape_.empty() ? 0 : 1) : shape_[0]; }
    std::size_t cols() const noexcept {
        if (shape_.empty()) return 0;
        if (shape_.size() == 1) return shape_[0];
        return data_.size() / shape_[0];
    }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const& {
        Tensor out = *this;
        out.reshape(std::move(shape));
        return out;
    }
    Tensor reshaped(Shape shape) && {
        reshape(std::move(shape));
        return std::move(*this);
    }
    void reshape(Shape shape) {
        if (element_count(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    static std::size_t element_count(const Shape& shape) {
        if (shape.empty()) return 0;
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    Shape shape_;
    std::vector<double> data_;
};

enum class ActivationKind { Sigmoid, Tanh, Relu };

inline const char* to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Relu: return "relu";
    }
    return "?";
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline Shape product_shape(const Tensor& a, std::size_t m, std::size_t n) {
    // A rank-1 left operand is a single row; keep the result a vector.
    if (m == 1 && a.rank() == 1) return {n};
    return {m, n};
}

}  // namespace detail

inline double sigmoid(double x) noexcept {
    // Split on sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// a [m x k] * b [k x n]. Inner loop runs over contiguous rows of b, so the
/// summation order is fixed and results are bit-reproducible.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (k != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    Tensor out(detail::product_shape(a, m, n));
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = po + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = pa[i * k + p];
            if (s == 0.0) continue;
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    return out;
}

/// a [m x k] * b^T where b is [n x k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (k != b.cols()) {
        throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()) + "^T");
    }
    Tensor out(a.rank() == 1 ? Shape{n} : Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            po[i * n + j] = acc;
        }
    }
    return out;
}

/// a^T * b where a is [k x m] and b is [k x n]; always returns [m x n].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (k != b.rows()) {
        throw DimensionError("matmul_tn: inner dimensions differ, " + shape_string(a.shape()) + "^T x " +
                             shape_string(b.shape()));
    }
    Tensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = pa + p * m;
        const double* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = arow[i];
            if (s == 0.0) continue;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor subtract(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "subtract");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

// dst += alpha * src
inline void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
    if (dst.size() != src.size()) {
        throw DimensionError("axpy: shape mismatch " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

/// Adds a bias of length cols() to every row.
inline void add_row_bias(Tensor& m, const Tensor& bias) {
    const std::size_t r = m.rows(), c = m.cols();
    if (bias.size() != c) {
        throw DimensionError("bias of shape " + shape_string(bias.shape()) + " does not match rows of " +
                             shape_string(m.shape()));
    }
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m[i * c + j] += bias[j];
}

/// Sum over rows, yielding one value per column.
inline Tensor column_sums(const Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += m[i * c + j];
    return out;
}

inline double activate(double x, ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::Sigmoid: return sigmoid(x);
        case ActivationKind::Tanh: return std::tanh(x);
        case ActivationKind::Relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

/// Derivative expressed through the activation's output y.
inline double activation_derivative(double y, ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::Sigmoid: return y * (1.0 - y);
        case ActivationKind::Tanh: return 1.0 - y * y;
        case ActivationKind::Relu: return y > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
    }
    return 0.0;
}

inline Tensor apply_activation(const Tensor& t, ActivationKind kind) {
    Tensor out = t;
    for (double& v : out.values()) v = activate(v, kind);
    return out;
}

inline Tensor activation_grad(const Tensor& y, ActivationKind kind) {
    Tensor out = y;
    for (double& v : out.values()) v = activation_derivative(v, kind);
    return out;
}

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace sitgru
