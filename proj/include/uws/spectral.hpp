// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uws {

/// Thin SVD M = U diag(singular_values) V^T with min(rows, cols) triplets.
///
/// Singular values are nonincreasing. Each column of U has its entry of
/// largest magnitude made nonnegative (first such entry on ties), and V is
/// flipped to match, so results are deterministic.
struct ThinSvd {
    Matrix U;
    std::vector<double> singular_values;
    Matrix V;
};

ThinSvd thin_svd(const Matrix& m);

/// ratio_i = sigma_i^2 / sum_j sigma_j^2. Throws degenerate_spectrum when all
/// singular values are zero.
std::vector<double> explained_variance(std::span<const double> singular_values);

/// How many leading components to keep.
class RankPolicy {
public:
    enum class Kind { cumulative_variance, eigen_floor, hard_threshold, fixed_k };

    /// Smallest rank whose cumulative explained variance is >= tau, tau in (0, 1].
    static RankPolicy cumulative_variance(double tau);
    /// Number of ratios strictly above eps (at least one).
    static RankPolicy eigen_floor(double eps);
    /// Singular values above the optimal hard threshold for i.i.d. noise.
    /// With no sigma the noise level is estimated from the median singular value.
    static RankPolicy hard_threshold(std::optional<double> noise_sigma = std::nullopt);
    static RankPolicy fixed_k(std::size_t k);

    Kind kind() const noexcept { return kind_; }
    double tau() const noexcept { return value_; }
    double eps() const noexcept { return value_; }
    std::optional<double> noise_sigma() const noexcept { return sigma_; }
    std::size_t k() const noexcept { return k_; }

    /// e.g. "cumulative_variance(0.95)"
    std::string describe() const;
    /// Inverse of describe().
    static RankPolicy parse(const std::string& text);

    bool operator==(const RankPolicy&) const = default;

private:
    RankPolicy(Kind kind, double value, std::optional<double> sigma, std::size_t k)
        : kind_(kind), value_(value), sigma_(sigma), k_(k) {}

    Kind kind_;
    double value_;
    std::optional<double> sigma_;
    std::size_t k_;
};

/// Singular values of a rows x cols matrix with their explained-variance ratios.
struct Spectrum {
    std::vector<double> singular_values;
    std::vector<double> ratios;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

Spectrum make_spectrum(std::vector<double> singular_values, std::size_t rows, std::size_t cols);

/// Rank selection from ratios alone. hard_threshold needs singular values and
/// the matrix shape, so it is rejected here.
std::size_t select_rank(std::span<const double> ratios, const RankPolicy& policy);
std::size_t select_rank(const Spectrum& spectrum, const RankPolicy& policy);

/// Count of ratios above ratio_1 * 1e-24, i.e. sigma_i > sigma_max * 1e-12.
std::size_t numerical_rank(std::span<const double> ratios);

/// Optimal hard-threshold cut for an m x n matrix (m <= n after transposing):
/// lambda(beta) sqrt(n) sigma when sigma is known, omega(beta) median(sigma_i)
/// otherwise, with beta = m / n.
double hard_threshold_cutoff(std::span<const double> singular_values, std::size_t rows,
                             std::size_t cols, std::optional<double> noise_sigma);

double hard_threshold_lambda(double beta);
double hard_threshold_omega(double beta);

struct PowerIterationOptions {
    std::size_t max_iterations = 0;  // 0 selects 1000 * dimension
    std::size_t restarts = 3;
    double tolerance = 1e-12;
    unsigned seed = 0x5eed;
};

/// Largest absolute eigenvalue of a symmetric matrix by power iteration on A^2,
/// stopped on the residual ||A^2 v - rho v|| <= sqrt(tolerance) * rho, which
/// leaves rho accurate to about `tolerance`.
double operator_norm(const Matrix& symmetric, const PowerIterationOptions& options = {});

/// Dense symmetric eigendecomposition, eigenvalues sorted nonincreasing.
struct SymmetricEigen {
    Vector values;
    Matrix vectors;
};

SymmetricEigen symmetric_eigen(const Matrix& symmetric);

/// max |lambda| from a dense eigensolve.
double spectral_norm_exact(const Matrix& symmetric);

}  // namespace uws
