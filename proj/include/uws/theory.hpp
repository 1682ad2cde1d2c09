// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/spectral.hpp"
#include "uws/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uws::theory {

/// Direction of the per-task estimation error f_hat - f_star.
enum class Perturbation {
    isotropic,  // uniformly random unit vector
    radial,     // along f_star, the direction that attains the within-task bound
};

const char* to_string(Perturbation p) noexcept;
Perturbation parse_perturbation(const std::string& text);

/// Synthetic task ensemble in R^d.
///
/// A task is drawn as z = sum_i sqrt(lambda_i) g_i phi_i with g_i standard
/// normal over an orthonormal planted basis phi, then rescaled to
/// f_star = B z / ||z||, so ||f_star|| = B exactly. f_hat = f_star + eta_t u.
struct SyntheticEnsembleConfig {
    std::size_t dim = 0;
    std::size_t k = 0;
    std::size_t tasks = 0;
    double bound_b = 1.0;
    /// Length 1 (shared) or `tasks`.
    std::vector<double> eta = {0.0};
    /// Nonincreasing, lambda_k > 0, k <= size <= dim. Empty means k ones.
    std::vector<double> spectrum;
    std::uint64_t seed = 0;
    Perturbation perturbation = Perturbation::isotropic;
};

struct TaskVector {
    Vector f_star;
    Vector f_hat;
};

enum class OperatorKind { population, true_empirical, learned_empirical };

const char* to_string(OperatorKind k) noexcept;

/// Symmetric PSD d x d operator with its eigendecomposition computed once.
class SecondMomentOperator {
public:
    SecondMomentOperator(Matrix matrix, OperatorKind kind);

    const Matrix& matrix() const noexcept { return matrix_; }
    OperatorKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
    double trace() const noexcept { return matrix_.trace(); }
    double opnorm() const;
    /// trace / opnorm
    double effective_rank() const;
    /// Eigenvalues, nonincreasing.
    const Vector& eigenvalues() const noexcept { return eigen_.values; }
    const Matrix& eigenvectors() const noexcept { return eigen_.vectors; }

private:
    Matrix matrix_;
    OperatorKind kind_;
    SymmetricEigen eigen_;
};

struct Projector {
    Matrix matrix;
    std::size_t rank = 0;
};

struct SampledEnsemble {
    std::vector<TaskVector> tasks;
    Matrix basis;                 // d x m planted orthonormal directions
    Vector population_eigenvalues;  // eigenvalues of E[f_star f_star^T] on `basis`
    Projector planted;            // onto the first k basis directions
};

/// Eigenvalues of E[f f^T] for f = B z/||z||, z ~ N(0, diag(spectrum)).
Vector population_eigenvalues(std::span<const double> spectrum, double bound_b);

/// d x m matrix with orthonormal columns drawn from the seed.
Matrix random_orthonormal_basis(std::size_t dim, std::size_t m, std::uint64_t seed);

SampledEnsemble sample_ensemble(const SyntheticEnsembleConfig& cfg);

/// Tasks only, over a fixed basis, from a stream derived from (seed, trial, tasks).
std::vector<TaskVector> sample_tasks(const SyntheticEnsembleConfig& cfg, const Matrix& basis,
                                     std::uint64_t trial);

/// (1/T) sum v v^T.
SecondMomentOperator second_moment(std::span<const Vector> vectors, OperatorKind kind);
SecondMomentOperator second_moment_of_tasks(std::span<const TaskVector> tasks, OperatorKind kind);
/// sum_i eigenvalues_i phi_i phi_i^T.
SecondMomentOperator population_operator(const Matrix& basis, const Vector& eigenvalues);

struct TopK {
    Projector projector;
    double eigengap = 0.0;  // lambda_k - lambda_{k+1}; lambda_{d+1} = 0
    bool degenerate = false;  // eigengap <= 0
};

TopK top_k_projector(const SecondMomentOperator& op, std::size_t k);

/// Operator norm of P - Q.
double subspace_distance(const Projector& p, const Projector& q);

struct BoundParameters {
    double bound_b = 1.0;
    double delta = 0.05;
    double c1 = 1.0;
    double c2 = 1.0;
    std::size_t tasks = 1;
    double eta_bar = 0.0;
    double eta2_bar = 0.0;
    std::optional<double> gamma_k;

    /// Fills eta_bar and eta2_bar from per-task values.
    static BoundParameters from_etas(double bound_b, double delta, std::span<const double> etas,
                                     std::optional<double> gamma_k = std::nullopt);

    double delta_per_task() const { return delta / (2.0 * static_cast<double>(tasks)); }
    double delta_across_tasks() const { return delta / 2.0; }
};

/// R + sqrt(ln(1/delta_t) / (2 n_t)).
double eta_from_complexity(double rademacher, std::size_t samples, double delta_t);

struct Theorem1Bounds {
    double across_term = 0.0;  // c1 B^2 sqrt(ln(c2/delta)/T)
    double within_term = 0.0;  // 2 B eta_bar + eta2_bar
    double op_bound = 0.0;
    std::optional<double> subspace_bound;  // (2/gamma_k) op_bound, when gamma_k is set
};

Theorem1Bounds theorem1_bounds(const BoundParameters& p);

struct WithinTaskReport {
    double measured = 0.0;  // ||S_learned - S_true||_op
    double cap = 0.0;       // (1/T) sum (2 B eta_t + eta_t^2)
    bool holds = false;
};

/// `eta` has length 1 or tasks.size().
WithinTaskReport within_task_term(std::span<const TaskVector> tasks, double bound_b, std::span<const double> eta);
/// Uses the realized ||f_hat - f_star|| as eta_t.
WithinTaskReport within_task_term(std::span<const TaskVector> tasks, double bound_b);

struct DavisKahanReport {
    double lhs = 0.0;  // ||P_pert - P_ref||_op
    double rhs = 0.0;  // (2/gamma_k) ||S_pert - S_ref||_op
    double gamma = 0.0;
    bool holds = false;
};

DavisKahanReport davis_kahan_check(const SecondMomentOperator& reference, const SecondMomentOperator& perturbed,
                                   std::size_t k);

struct DavisKahanStudy {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double max_ratio = 0.0;  // max lhs / rhs
};

/// Random PSD references (uniform eigenvalues over a random basis) perturbed by
/// `perturb` times a random symmetric matrix of unit operator norm.
DavisKahanStudy davis_kahan_study(std::size_t dim, std::size_t k, double perturb, std::size_t trials,
                                  std::uint64_t seed);

/// sum_{i > k} spectrum_i for a nonincreasing spectrum.
double optimal_projection_risk(std::span<const double> spectrum, std::size_t k);

struct ProjectionRiskReport {
    double risk = 0.0;          // mean ||f - P f||^2
    double optimal_risk = 0.0;  // sum_{i>k} lambda_i of the empirical operator
    double excess = 0.0;
    double bound = 0.0;         // trace(S) ||P - P_k||_op
    bool holds = false;
};

ProjectionRiskReport projection_risk(std::span<const Vector> vectors, const Projector& p);

struct ConvergenceConfig {
    std::size_t dim = 64;
    std::size_t k = 4;
    std::vector<double> spectrum;  // empty means k ones
    double bound_b = 1.0;
    double eta = 0.0;
    Perturbation perturbation = Perturbation::isotropic;
    std::vector<std::size_t> t_grid = {25, 50, 100, 200, 400};
    std::size_t trials = 50;
    std::uint64_t seed = 0;
    double delta = 0.05;
    double c1 = 1.0;
    double c2 = 1.0;
};

struct ConvergenceRow {
    std::size_t tasks = 0;
    std::size_t trial = 0;
    double op_error = 0.0;         // ||S_learned - S||_op
    double subspace_error = 0.0;   // ||P_learned - P_k||_op
    double true_op_error = 0.0;    // ||S_true - S||_op
    double op_bound = 0.0;
    double subspace_bound = 0.0;
};

struct ConvergenceSummary {
    std::size_t tasks = 0;
    double mean_op_error = 0.0;
    double mean_subspace_error = 0.0;
    double mean_true_op_error = 0.0;
    double op_bound = 0.0;
    double subspace_bound = 0.0;
};

struct ConvergenceReport {
    ConvergenceConfig config;
    Vector population_eigenvalues;
    double gamma_k = 0.0;
    double noise_floor = 0.0;  // 2 B eta + eta^2
    std::vector<ConvergenceRow> rows;
    std::vector<ConvergenceSummary> summary;
    /// Least-squares slope of log(mean op_error) against log(T); unset with
    /// fewer than two distinct T values.
    std::optional<double> slope;
};

ConvergenceReport convergence_study(const ConvergenceConfig& cfg);

/// Least-squares slope of log(y) on log(x).
std::optional<double> log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace uws::theory
