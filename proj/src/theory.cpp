// SPDX-License-Identifier: Apache-2.0
#include "uws/theory.hpp"

#include "uws/error.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

namespace uws::theory {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial, std::uint64_t tasks) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(trial),
                      static_cast<std::uint32_t>(trial >> 32), static_cast<std::uint32_t>(tasks),
                      static_cast<std::uint32_t>(tasks >> 32)};
    return std::mt19937_64(seq);
}

constexpr std::uint64_t kBasisStream = 1;
constexpr std::uint64_t kTaskStream = 2;
constexpr std::uint64_t kDavisKahanStream = 3;

Vector random_unit(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Vector v(static_cast<Eigen::Index>(dim));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    } while (v.norm() == 0.0);
    return v.normalized();
}

std::vector<double> effective_spectrum(std::span<const double> spectrum, std::size_t k) {
    if (spectrum.empty()) return std::vector<double>(k, 1.0);
    return {spectrum.begin(), spectrum.end()};
}

void validate(const SyntheticEnsembleConfig& cfg, const std::vector<double>& spectrum) {
    if (cfg.dim < 1 || cfg.k < 1 || cfg.k > cfg.dim) throw_invalid("ensemble config requires 1 <= k <= d");
    if (cfg.tasks < 1) throw_invalid("ensemble config requires T >= 1");
    if (!(cfg.bound_b > 0.0)) throw_invalid("ensemble config requires B > 0");
    if (cfg.eta.size() != 1 && cfg.eta.size() != cfg.tasks) throw_invalid("eta must have length 1 or T");
    for (double e : cfg.eta)
        if (!(e >= 0.0)) throw_invalid("eta values must be >= 0");
    if (spectrum.size() < cfg.k || spectrum.size() > cfg.dim) {
        throw_invalid("spectrum length must lie between k and d");
    }
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (!(spectrum[i] >= 0.0)) throw_invalid("spectrum values must be >= 0");
        if (i > 0 && spectrum[i] > spectrum[i - 1]) throw_invalid("spectrum must be nonincreasing");
    }
    if (!(spectrum[cfg.k - 1] > 0.0)) throw_invalid("spectrum requires lambda_k > 0");
}

double eta_for(std::span<const double> eta, std::size_t t) {
    return eta.size() == 1 ? eta[0] : eta[t];
}

Matrix projector_onto(const Matrix& columns) {
    return columns * columns.transpose();
}

}  // namespace

const char* to_string(Perturbation p) noexcept {
    return p == Perturbation::isotropic ? "isotropic" : "radial";
}

Perturbation parse_perturbation(const std::string& text) {
    if (text == "isotropic") return Perturbation::isotropic;
    if (text == "radial") return Perturbation::radial;
    throw_invalid("unknown perturbation '" + text + "' (expected isotropic|radial)");
}

const char* to_string(OperatorKind k) noexcept {
    switch (k) {
        case OperatorKind::population: return "population";
        case OperatorKind::true_empirical: return "true_empirical";
        case OperatorKind::learned_empirical: return "learned_empirical";
    }
    return "unknown";
}

SecondMomentOperator::SecondMomentOperator(Matrix matrix, OperatorKind kind)
    : matrix_(std::move(matrix)), kind_(kind), eigen_(symmetric_eigen(matrix_)) {}

double SecondMomentOperator::opnorm() const {
    return eigen_.values.size() ? eigen_.values.cwiseAbs().maxCoeff() : 0.0;
}

double SecondMomentOperator::effective_rank() const {
    const double norm = opnorm();
    if (norm == 0.0) throw Error(ErrorKind::degenerate_spectrum, "effective rank of a zero operator");
    return trace() / norm;
}

Vector population_eigenvalues(std::span<const double> spectrum, double bound_b) {
    std::vector<double> active;
    for (double l : spectrum)
        if (l > 0.0) active.push_back(l);
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(spectrum.size()));
    if (active.empty()) return mu;

    boost::math::quadrature::exp_sinh<double> integrator;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double li = spectrum[i];
        if (!(li > 0.0)) continue;
        // E[lambda_i g_i^2 / sum_j lambda_j g_j^2] via 1/q = int_0^inf exp(-s q) ds.
        const auto integrand = [&](double s) {
            double log_value = std::log(li) - 1.5 * std::log1p(2.0 * s * li);
            bool skipped = false;
            for (double lj : active) {
                if (!skipped && lj == li) {
                    skipped = true;
                    continue;
                }
                log_value -= 0.5 * std::log1p(2.0 * s * lj);
            }
            return std::exp(log_value);
        };
        double error = 0.0;
        const double value = integrator.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), 1e-13, &error);
        mu(static_cast<Eigen::Index>(i)) = bound_b * bound_b * value;
    }
    return mu;
}

Matrix random_orthonormal_basis(std::size_t dim, std::size_t m, std::uint64_t seed) {
    if (m > dim || m == 0) throw_invalid("basis size must lie in [1, d]");
    auto rng = make_rng(seed, kBasisStream, 0, 0);
    std::normal_distribution<double> normal;
    Matrix g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(m));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    const Matrix r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

std::vector<TaskVector> sample_tasks(const SyntheticEnsembleConfig& cfg, const Matrix& basis, std::uint64_t trial) {
    const auto spectrum = effective_spectrum(cfg.spectrum, cfg.k);
    validate(cfg, spectrum);
    if (static_cast<std::size_t>(basis.rows()) != cfg.dim || static_cast<std::size_t>(basis.cols()) != spectrum.size()) {
        throw_invalid("basis shape does not match the ensemble config");
    }
    auto rng = make_rng(cfg.seed, kTaskStream, trial, cfg.tasks);
    std::normal_distribution<double> normal;

    std::vector<TaskVector> tasks;
    tasks.reserve(cfg.tasks);
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
        Vector z;
        do {
            z = Vector::Zero(static_cast<Eigen::Index>(cfg.dim));
            for (std::size_t i = 0; i < spectrum.size(); ++i) {
                z += std::sqrt(spectrum[i]) * normal(rng) * basis.col(static_cast<Eigen::Index>(i));
            }
        } while (z.norm() == 0.0);
        TaskVector task;
        task.f_star = cfg.bound_b * z / z.norm();
        const double eta = eta_for(cfg.eta, t);
        const Vector direction = cfg.perturbation == Perturbation::radial ? Vector(task.f_star / cfg.bound_b)
                                                                          : random_unit(cfg.dim, rng);
        task.f_hat = task.f_star + eta * direction;
        tasks.push_back(std::move(task));
    }
    return tasks;
}

SampledEnsemble sample_ensemble(const SyntheticEnsembleConfig& cfg) {
    const auto spectrum = effective_spectrum(cfg.spectrum, cfg.k);
    validate(cfg, spectrum);
    SampledEnsemble out;
    out.basis = random_orthonormal_basis(cfg.dim, spectrum.size(), cfg.seed);
    out.population_eigenvalues = population_eigenvalues(spectrum, cfg.bound_b);
    out.planted = {projector_onto(out.basis.leftCols(static_cast<Eigen::Index>(cfg.k))), cfg.k};
    out.tasks = sample_tasks(cfg, out.basis, 0);
    return out;
}

SecondMomentOperator second_moment(std::span<const Vector> vectors, OperatorKind kind) {
    if (vectors.empty()) throw_invalid("second_moment: no vectors");
    const Eigen::Index d = vectors.front().size();
    Matrix s = Matrix::Zero(d, d);
    for (const auto& v : vectors) {
        if (v.size() != d) throw_invalid("second_moment: vectors differ in dimension");
        s.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    s = s.selfadjointView<Eigen::Lower>();
    s /= static_cast<double>(vectors.size());
    return SecondMomentOperator(std::move(s), kind);
}

SecondMomentOperator second_moment_of_tasks(std::span<const TaskVector> tasks, OperatorKind kind) {
    std::vector<Vector> vectors;
    vectors.reserve(tasks.size());
    for (const auto& t : tasks) vectors.push_back(kind == OperatorKind::learned_empirical ? t.f_hat : t.f_star);
    return second_moment(vectors, kind);
}

SecondMomentOperator population_operator(const Matrix& basis, const Vector& eigenvalues) {
    if (basis.cols() != eigenvalues.size()) throw_invalid("population_operator: basis and eigenvalues disagree");
    Matrix s = basis * eigenvalues.asDiagonal() * basis.transpose();
    s = 0.5 * (s + s.transpose());
    return SecondMomentOperator(std::move(s), OperatorKind::population);
}

TopK top_k_projector(const SecondMomentOperator& op, std::size_t k) {
    const std::size_t d = op.dim();
    if (k < 1 || k > d) throw_invalid("top_k_projector: k must lie in [1, d]");
    const auto kk = static_cast<Eigen::Index>(k);
    TopK out;
    out.projector = {projector_onto(op.eigenvectors().leftCols(kk)), k};
    const double next = k < d ? op.eigenvalues()(kk) : 0.0;
    out.eigengap = op.eigenvalues()(kk - 1) - next;
    out.degenerate = !(out.eigengap > 0.0);
    return out;
}

double subspace_distance(const Projector& p, const Projector& q) {
    if (p.matrix.rows() != q.matrix.rows()) throw_invalid("subspace_distance: projectors differ in dimension");
    const Matrix diff = p.matrix - q.matrix;
    return spectral_norm_exact(0.5 * (diff + diff.transpose()));
}

BoundParameters BoundParameters::from_etas(double bound_b, double delta, std::span<const double> etas,
                                           std::optional<double> gamma_k) {
    if (etas.empty()) throw_invalid("from_etas: at least one eta is required");
    BoundParameters p;
    p.bound_b = bound_b;
    p.delta = delta;
    p.tasks = etas.size();
    p.gamma_k = gamma_k;
    for (double e : etas) {
        p.eta_bar += e;
        p.eta2_bar += e * e;
    }
    p.eta_bar /= static_cast<double>(etas.size());
    p.eta2_bar /= static_cast<double>(etas.size());
    return p;
}

double eta_from_complexity(double rademacher, std::size_t samples, double delta_t) {
    if (samples == 0 || !(delta_t > 0.0 && delta_t < 1.0)) throw_invalid("eta_from_complexity: need n >= 1, delta_t in (0,1)");
    return rademacher + std::sqrt(std::log(1.0 / delta_t) / (2.0 * static_cast<double>(samples)));
}

Theorem1Bounds theorem1_bounds(const BoundParameters& p) {
    if (!(p.bound_b > 0.0)) throw_invalid("theorem1_bounds: B must be > 0");
    if (!(p.delta > 0.0 && p.delta < 1.0)) throw_invalid("theorem1_bounds: delta must lie in (0, 1)");
    if (p.tasks < 1) throw_invalid("theorem1_bounds: T must be >= 1");
    if (!(p.eta_bar >= 0.0) || !(p.eta2_bar >= 0.0)) throw_invalid("theorem1_bounds: eta averages must be >= 0");
    const double log_term = std::log(p.c2 / p.delta);
    if (log_term < 0.0) throw_invalid("theorem1_bounds: ln(c2/delta) must be >= 0");

    Theorem1Bounds b;
    b.across_term = p.c1 * p.bound_b * p.bound_b * std::sqrt(log_term / static_cast<double>(p.tasks));
    b.within_term = 2.0 * p.bound_b * p.eta_bar + p.eta2_bar;
    b.op_bound = b.across_term + b.within_term;
    if (p.gamma_k) {
        if (!(*p.gamma_k > 0.0)) throw_invalid("theorem1_bounds: the subspace bound needs gamma_k > 0");
        b.subspace_bound = 2.0 / *p.gamma_k * b.op_bound;
    }
    return b;
}

WithinTaskReport within_task_term(std::span<const TaskVector> tasks, double bound_b, std::span<const double> eta) {
    if (tasks.empty()) throw_invalid("within_task_term: no tasks");
    if (eta.size() != 1 && eta.size() != tasks.size()) throw_invalid("within_task_term: eta must have length 1 or T");
    const auto learned = second_moment_of_tasks(tasks, OperatorKind::learned_empirical);
    const auto truth = second_moment_of_tasks(tasks, OperatorKind::true_empirical);
    WithinTaskReport r;
    r.measured = spectral_norm_exact(learned.matrix() - truth.matrix());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const double e = eta_for(eta, t);
        r.cap += 2.0 * bound_b * e + e * e;
    }
    r.cap /= static_cast<double>(tasks.size());
    r.holds = r.measured <= r.cap + 1e-8;
    return r;
}

WithinTaskReport within_task_term(std::span<const TaskVector> tasks, double bound_b) {
    std::vector<double> eta;
    eta.reserve(tasks.size());
    for (const auto& t : tasks) eta.push_back((t.f_hat - t.f_star).norm());
    return within_task_term(tasks, bound_b, eta);
}

DavisKahanReport davis_kahan_check(const SecondMomentOperator& reference, const SecondMomentOperator& perturbed,
                                   std::size_t k) {
    if (reference.dim() != perturbed.dim()) throw_invalid("davis_kahan_check: operators differ in dimension");
    const TopK ref = top_k_projector(reference, k);
    if (ref.degenerate) throw_invalid("davis_kahan_check: reference eigengap gamma_k is not positive");
    const TopK pert = top_k_projector(perturbed, k);
    DavisKahanReport r;
    r.gamma = ref.eigengap;
    r.lhs = subspace_distance(pert.projector, ref.projector);
    r.rhs = 2.0 / r.gamma * spectral_norm_exact(perturbed.matrix() - reference.matrix());
    r.holds = r.lhs <= r.rhs + 1e-10;
    return r;
}

DavisKahanStudy davis_kahan_study(std::size_t dim, std::size_t k, double perturb, std::size_t trials,
                                  std::uint64_t seed) {
    if (dim < 2 || k < 1 || k > dim) throw_invalid("davis_kahan_study: need d >= 2 and 1 <= k <= d");
    if (!(perturb >= 0.0)) throw_invalid("davis_kahan_study: perturbation must be >= 0");
    DavisKahanStudy study;
    study.trials = trials;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal;
    const auto d = static_cast<Eigen::Index>(dim);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto rng = make_rng(seed, kDavisKahanStream, trial, dim);
        std::vector<double> eig(dim);
        for (double& e : eig) e = uniform(rng);
        std::sort(eig.begin(), eig.end(), std::greater<>());
        Matrix g(d, d);
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
        const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
        const Vector values = Eigen::Map<const Vector>(eig.data(), d);
        Matrix s = q * values.asDiagonal() * q.transpose();
        s = 0.5 * (s + s.transpose());

        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
        Matrix e = 0.5 * (g + g.transpose());
        e /= spectral_norm_exact(e);

        const SecondMomentOperator reference(s, OperatorKind::population);
        const SecondMomentOperator perturbed(s + perturb * e, OperatorKind::learned_empirical);
        if (top_k_projector(reference, k).degenerate) continue;
        const auto r = davis_kahan_check(reference, perturbed, k);
        if (!r.holds) ++study.violations;
        if (r.rhs > 0.0) study.max_ratio = std::max(study.max_ratio, r.lhs / r.rhs);
    }
    return study;
}

double optimal_projection_risk(std::span<const double> spectrum, std::size_t k) {
    double tail = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (i > 0 && spectrum[i] > spectrum[i - 1] + 1e-15) throw_invalid("spectrum must be nonincreasing");
        if (i >= k) tail += spectrum[i];
    }
    return tail;
}

ProjectionRiskReport projection_risk(std::span<const Vector> vectors, const Projector& p) {
    const auto s = second_moment(vectors, OperatorKind::true_empirical);
    if (static_cast<std::size_t>(p.matrix.rows()) != s.dim()) throw_invalid("projection_risk: dimension mismatch");
    ProjectionRiskReport r;
    for (const auto& v : vectors) r.risk += (v - p.matrix * v).squaredNorm();
    r.risk /= static_cast<double>(vectors.size());
    const Vector& eig = s.eigenvalues();
    r.optimal_risk = optimal_projection_risk(std::span(eig.data(), static_cast<std::size_t>(eig.size())), p.rank);
    r.excess = r.risk - r.optimal_risk;
    r.bound = s.trace() * subspace_distance(p, top_k_projector(s, p.rank).projector);
    r.holds = r.excess <= r.bound + 1e-8;
    return r;
}

std::optional<double> log_log_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw_invalid("log_log_slope: length mismatch");
    std::set<double> distinct(x.begin(), x.end());
    if (distinct.size() < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::nullopt;
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

ConvergenceReport convergence_study(const ConvergenceConfig& cfg) {
    if (cfg.t_grid.empty()) throw_invalid("convergence_study: empty T grid");
    if (cfg.trials < 1) throw_invalid("convergence_study: trials must be >= 1");

    ConvergenceReport report;
    report.config = cfg;
    const auto spectrum = effective_spectrum(cfg.spectrum, cfg.k);

    SyntheticEnsembleConfig ens;
    ens.dim = cfg.dim;
    ens.k = cfg.k;
    ens.bound_b = cfg.bound_b;
    ens.eta = {cfg.eta};
    ens.spectrum = spectrum;
    ens.seed = cfg.seed;
    ens.perturbation = cfg.perturbation;
    ens.tasks = 1;
    validate(ens, spectrum);

    const Matrix basis = random_orthonormal_basis(cfg.dim, spectrum.size(), cfg.seed);
    report.population_eigenvalues = population_eigenvalues(spectrum, cfg.bound_b);
    const auto population = population_operator(basis, report.population_eigenvalues);
    const TopK planted = top_k_projector(population, cfg.k);
    report.gamma_k = planted.eigengap;
    report.noise_floor = 2.0 * cfg.bound_b * cfg.eta + cfg.eta * cfg.eta;

    for (std::size_t t : cfg.t_grid) {
        if (t < 1) throw_invalid("convergence_study: T values must be >= 1");
        ens.tasks = t;
        BoundParameters bp;
        bp.bound_b = cfg.bound_b;
        bp.delta = cfg.delta;
        bp.c1 = cfg.c1;
        bp.c2 = cfg.c2;
        bp.tasks = t;
        bp.eta_bar = cfg.eta;
        bp.eta2_bar = cfg.eta * cfg.eta;
        if (!planted.degenerate) bp.gamma_k = planted.eigengap;
        const Theorem1Bounds bounds = theorem1_bounds(bp);

        ConvergenceSummary summary;
        summary.tasks = t;
        summary.op_bound = bounds.op_bound;
        summary.subspace_bound = bounds.subspace_bound.value_or(std::numeric_limits<double>::infinity());
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            const auto tasks = sample_tasks(ens, basis, trial);
            const auto learned = second_moment_of_tasks(tasks, OperatorKind::learned_empirical);
            const auto truth = second_moment_of_tasks(tasks, OperatorKind::true_empirical);
            ConvergenceRow row;
            row.tasks = t;
            row.trial = trial;
            row.op_error = spectral_norm_exact(learned.matrix() - population.matrix());
            row.true_op_error = spectral_norm_exact(truth.matrix() - population.matrix());
            row.subspace_error = subspace_distance(top_k_projector(learned, cfg.k).projector, planted.projector);
            row.op_bound = summary.op_bound;
            row.subspace_bound = summary.subspace_bound;
            summary.mean_op_error += row.op_error;
            summary.mean_true_op_error += row.true_op_error;
            summary.mean_subspace_error += row.subspace_error;
            report.rows.push_back(row);
        }
        const double n = static_cast<double>(cfg.trials);
        summary.mean_op_error /= n;
        summary.mean_true_op_error /= n;
        summary.mean_subspace_error /= n;
        report.summary.push_back(summary);
    }

    std::vector<double> ts, errs;
    for (const auto& s : report.summary) {
        ts.push_back(static_cast<double>(s.tasks));
        errs.push_back(s.mean_op_error);
    }
    report.slope = log_log_slope(ts, errs);
    return report;
}

}  // namespace uws::theory
