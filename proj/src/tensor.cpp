// SPDX-License-Identifier: Apache-2.0
#include "uws/tensor.hpp"

#include "uws/error.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace uws {

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > kMaxTensorOrder) {
        throw_invalid("tensor order must be in [1, " + std::to_string(kMaxTensorOrder) +
                      "], got " + std::to_string(shape.size()));
    }
    for (std::size_t e : shape) {
        if (e == 0) throw_invalid("tensor extents must be >= 1");
    }
}

// Column strides of the mode-`mode` unfolding (zero for `mode` itself).
std::vector<std::size_t> unfold_strides(const Shape& shape, std::size_t mode) {
    std::vector<std::size_t> strides(shape.size(), 0);
    std::size_t s = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k == mode) continue;
        strides[k] = s;
        s *= shape[k];
    }
    return strides;
}

// Visits every entry in storage order, passing (flat, row, col) of the unfolding.
template <typename F>
void for_each_unfolded(const Shape& shape, std::size_t mode, F&& f) {
    const auto strides = unfold_strides(shape, mode);
    const std::size_t n = shape_size(shape);
    std::vector<std::size_t> idx(shape.size(), 0);
    std::size_t col = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        f(flat, idx[mode], col);
        for (std::size_t k = shape.size(); k-- > 0;) {
            if (++idx[k] < shape[k]) {
                col += strides[k];
                break;
            }
            col -= strides[k] * (shape[k] - 1);
            idx[k] = 0;
        }
    }
}

void check_same_shape(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape()) throw_invalid("tensor shapes differ");
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor() : shape_{1}, data_(1, 0.0) {}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw_invalid("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape size " + std::to_string(shape_size(shape_)));
    }
}

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
    DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t.data_[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return t;
}

Matrix DenseTensor::to_matrix() const {
    if (order() != 2) throw_invalid("to_matrix requires an order-2 tensor");
    const auto rows = static_cast<Eigen::Index>(shape_[0]);
    const auto cols = static_cast<Eigen::Index>(shape_[1]);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data_[static_cast<std::size_t>(i * cols + j)];
    return m;
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw_invalid("index order does not match tensor order");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
        if (index[k] >= shape_[k]) throw_invalid("tensor index out of range");
        flat = flat * shape_[k] + index[k];
    }
    return flat;
}

namespace {

Matrix unfold_columns(const DenseTensor& t, std::size_t mode) {
    if (mode >= t.order()) {
        throw_invalid("unfold mode " + std::to_string(mode) + " out of range for order " +
                      std::to_string(t.order()));
    }
    const auto rows = static_cast<Eigen::Index>(t.extent(mode));
    const auto cols = static_cast<Eigen::Index>(t.size() / t.extent(mode));
    Matrix m(rows, cols);
    const auto data = t.data();
    for_each_unfolded(t.shape(), mode, [&](std::size_t flat, std::size_t row, std::size_t col) {
        m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = data[flat];
    });
    return m;
}

DenseTensor fold_columns(const Matrix& m, std::size_t mode, const Shape& shape) {
    DenseTensor t(shape);
    if (mode >= shape.size()) throw_invalid("fold mode out of range");
    const std::size_t cols = t.size() / shape[mode];
    if (static_cast<std::size_t>(m.rows()) != shape[mode] || static_cast<std::size_t>(m.cols()) != cols) {
        throw_invalid("fold: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected " + std::to_string(shape[mode]) + "x" + std::to_string(cols));
    }
    auto data = t.data();
    for_each_unfolded(shape, mode, [&](std::size_t flat, std::size_t row, std::size_t col) {
        data[flat] = m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    });
    return t;
}

}  // namespace

// Order 1 is the degenerate case: a single row.
Matrix unfold(const DenseTensor& t, std::size_t mode) {
    Matrix m = unfold_columns(t, mode);
    if (t.order() == 1) m.transposeInPlace();
    return m;
}

DenseTensor fold(const Matrix& m, std::size_t mode, const Shape& shape) {
    if (shape.size() == 1 && m.rows() == 1) return fold_columns(m.transpose(), mode, shape);
    return fold_columns(m, mode, shape);
}

DenseTensor mode_product(const DenseTensor& t, const Matrix& m, std::size_t mode) {
    if (mode >= t.order()) throw_invalid("mode_product mode out of range");
    if (static_cast<std::size_t>(m.cols()) != t.extent(mode)) {
        throw_invalid("mode_product: matrix has " + std::to_string(m.cols()) + " columns, mode " +
                      std::to_string(mode) + " has extent " + std::to_string(t.extent(mode)));
    }
    Shape out_shape = t.shape();
    out_shape[mode] = static_cast<std::size_t>(m.rows());
    return fold_columns(m * unfold_columns(t, mode), mode, out_shape);
}

double frobenius_norm(const DenseTensor& t) {
    // Scaled accumulation avoids overflow for very large entries.
    double scale = 0.0;
    double ssq = 1.0;
    for (double v : t.data()) {
        if (v == 0.0) continue;
        const double a = std::abs(v);
        if (scale < a) {
            ssq = 1.0 + ssq * (scale / a) * (scale / a);
            scale = a;
        } else {
            ssq += (a / scale) * (a / scale);
        }
    }
    return scale * std::sqrt(ssq);
}

DenseTensor operator-(const DenseTensor& a, const DenseTensor& b) {
    check_same_shape(a, b);
    DenseTensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

DenseTensor operator+(const DenseTensor& a, const DenseTensor& b) {
    check_same_shape(a, b);
    DenseTensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return out;
}

DenseTensor operator*(double s, const DenseTensor& t) {
    DenseTensor out = t;
    for (double& v : out.data()) v *= s;
    return out;
}

}  // namespace uws
