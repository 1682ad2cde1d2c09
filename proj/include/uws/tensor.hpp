// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace uws {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxTensorOrder = 8;

/// Dense real tensor of order 1..8.
///
/// Entries are stored with the last index varying fastest (row-major /
/// lexicographic). Modes are 0-based throughout the library.
class DenseTensor {
public:
    /// Order-1 tensor holding a single zero.
    DenseTensor();
    /// Zero-filled tensor.
    explicit DenseTensor(Shape shape);
    DenseTensor(Shape shape, std::vector<double> data);

    /// Order-2 tensor with the matrix entries (row index first).
    static DenseTensor from_matrix(const Matrix& m);
    /// Inverse of from_matrix; requires order 2.
    Matrix to_matrix() const;

    const Shape& shape() const noexcept { return shape_; }
    std::size_t extent(std::size_t mode) const { return shape_.at(mode); }
    std::size_t order() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    std::size_t flat_index(std::span<const std::size_t> index) const;
    double at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }
    double& at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }

    bool operator==(const DenseTensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_size(const Shape& shape);

/// Mode-`mode` matricization: row i holds every entry whose mode index is i.
/// An order-1 tensor unfolds to a single row.
/// Columns enumerate the remaining indices with the first remaining mode
/// varying fastest (Kolda-Bader ordering).
Matrix unfold(const DenseTensor& t, std::size_t mode);

/// Exact inverse of unfold for the given target shape.
DenseTensor fold(const Matrix& m, std::size_t mode, const Shape& shape);

/// t x_mode M, with M of size J x I_mode. The result has extent J on `mode`.
DenseTensor mode_product(const DenseTensor& t, const Matrix& m, std::size_t mode);

double frobenius_norm(const DenseTensor& t);

DenseTensor operator-(const DenseTensor& a, const DenseTensor& b);
DenseTensor operator+(const DenseTensor& a, const DenseTensor& b);
DenseTensor operator*(double s, const DenseTensor& t);

}  // namespace uws
