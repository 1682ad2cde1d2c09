// SPDX-License-Identifier: Apache-2.0
// Reference implementations used only as test oracles. None of them call the
// library's numerical routines.
#pragma once

#include "uws/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using uws::Matrix;
using uws::Vector;

struct EigenPairs {
    Vector values;   // nonincreasing
    Matrix vectors;  // columns match values
};

/// Cyclic Jacobi rotations on a symmetric matrix.
EigenPairs jacobi_eigen(const Matrix& symmetric, double tol = 1e-15, int max_sweeps = 100);

/// Singular values by one-sided Jacobi rotations, nonincreasing.
std::vector<double> singular_values(const Matrix& m);

/// Mode-n unfolding by explicit index enumeration: last index fastest in the
/// flat data, columns ordered with the first remaining mode fastest.
Matrix unfold_by_enumeration(const uws::DenseTensor& t, std::size_t mode);

/// Flat offset of a multi-index, last index fastest.
std::size_t flat_offset(const uws::Shape& shape, const std::vector<std::size_t>& index);

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
uws::DenseTensor gaussian_tensor(const uws::Shape& shape, std::mt19937_64& rng);
/// d x m with orthonormal columns (Gram-Schmidt).
Matrix orthonormal(Eigen::Index d, Eigen::Index m, std::mt19937_64& rng);

/// Max |Q^T Q - I|.
double orthonormality_defect(const Matrix& q);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace oracle
