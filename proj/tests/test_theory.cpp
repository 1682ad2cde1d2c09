// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "support/oracles.hpp"
#include "uws/error.hpp"
#include "uws/theory.hpp"

#include <cmath>

using namespace uws;
using namespace uws::theory;

namespace {

Matrix diag(std::initializer_list<double> v) {
    Vector d(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) d(i++) = x;
    return d.asDiagonal();
}

SyntheticEnsembleConfig config(std::size_t d, std::size_t k, std::size_t t, std::uint64_t seed) {
    SyntheticEnsembleConfig c;
    c.dim = d;
    c.k = k;
    c.tasks = t;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("population eigenvalues of the sphere-rescaled ensemble") {
    const std::vector<double> flat(4, 1.0);
    const Vector mu = population_eigenvalues(flat, 2.0);
    for (int i = 0; i < 4; ++i) CHECK(mu(i) == doctest::Approx(1.0).epsilon(1e-10));

    // Monte-Carlo oracle: E[lambda_i g_i^2 / sum lambda_j g_j^2].
    const std::vector<double> spec{4, 2, 1, 0.5};
    const Vector m = population_eigenvalues(spec, 1.0);
    CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-10));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Vector acc = Vector::Zero(4);
    const int n = 200000;
    for (int s = 0; s < n; ++s) {
        Vector z(4);
        for (int i = 0; i < 4; ++i) z(i) = spec[static_cast<std::size_t>(i)] * std::pow(normal(rng), 2);
        acc += z / z.sum();
    }
    acc /= n;
    for (int i = 0; i < 4; ++i) CHECK(std::abs(acc(i) - m(i)) < 3e-3);
}

TEST_CASE("sampled tasks obey their constraints") {
    auto c = config(10, 3, 50, 7);
    c.bound_b = 2.0;
    c.eta = {0.3};
    const auto e = sample_ensemble(c);
    CHECK(oracle::orthonormality_defect(e.basis) < 1e-12);
    for (const auto& t : e.tasks) {
        CHECK(t.f_star.norm() <= 2.0 + 1e-12);
        CHECK((t.f_hat - t.f_star).norm() <= 0.3 + 1e-12);
        CHECK((t.f_star - e.planted.matrix * t.f_star).norm() < 1e-12);
    }
    c.eta = {0.0};
    for (const auto& t : sample_ensemble(c).tasks) CHECK(t.f_hat == t.f_star);
    CHECK(sample_ensemble(c).tasks[5].f_star == e.tasks[5].f_star);

    auto bad = c;
    bad.k = 11;
    CHECK_THROWS_AS(sample_ensemble(bad), Error);
    bad = c;
    bad.eta = {0.1, 0.2};
    CHECK_THROWS_AS(sample_ensemble(bad), Error);
    bad = c;
    bad.spectrum = {1.0, 2.0, 0.5};
    CHECK_THROWS_AS(sample_ensemble(bad), Error);
}

TEST_CASE("isotropic full-dimensional ensemble has effective rank d") {
    const auto e = sample_ensemble(config(5, 5, 10000, 3));
    const auto s = second_moment_of_tasks(e.tasks, OperatorKind::true_empirical);
    CHECK(std::abs(s.effective_rank() - 5.0) <= 0.05 * 5.0);

    const auto k = sample_ensemble(config(12, 4, 10000, 4));
    const auto sk = second_moment_of_tasks(k.tasks, OperatorKind::true_empirical);
    CHECK(std::abs(sk.effective_rank() - 4.0) <= 0.1 * 4.0);
}

TEST_CASE("second moment examples") {
    Vector e1 = Vector::Zero(3), e2 = Vector::Zero(3);
    e1(0) = 1;
    e2(1) = 1;
    const std::vector<Vector> one{e1};
    const auto s1 = second_moment(one, OperatorKind::true_empirical);
    CHECK(s1.matrix() == e1 * e1.transpose());
    CHECK(s1.trace() == 1.0);
    const std::vector<Vector> two{e1, e2};
    const auto s2 = second_moment(two, OperatorKind::true_empirical);
    CHECK((s2.matrix() - 0.5 * (e1 * e1.transpose() + e2 * e2.transpose())).norm() < 1e-15);
    CHECK(s2.opnorm() == doctest::Approx(0.5));

    std::mt19937_64 rng(5);
    std::vector<Vector> vs;
    double mean_sq = 0.0;
    for (int i = 0; i < 30; ++i) {
        vs.push_back(oracle::gaussian(6, 1, rng).col(0));
        mean_sq += vs.back().squaredNorm() / 30.0;
    }
    const auto s = second_moment(vs, OperatorKind::true_empirical);
    CHECK(std::abs(s.trace() - mean_sq) <= 1e-10 * mean_sq);
    CHECK((s.matrix() - s.matrix().transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(s.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("top-k projectors") {
    const SecondMomentOperator d(diag({3, 2, 1}), OperatorKind::population);
    const auto t = top_k_projector(d, 2);
    CHECK((t.projector.matrix - diag({1, 1, 0})).norm() < 1e-12);
    CHECK(t.eigengap == doctest::Approx(1.0));
    const auto full = top_k_projector(d, 3);
    CHECK((full.projector.matrix - Matrix::Identity(3, 3)).norm() < 1e-12);
    CHECK(full.eigengap == doctest::Approx(1.0));
    CHECK(top_k_projector(SecondMomentOperator(diag({1, 1, 0}), OperatorKind::population), 1).degenerate);

    std::mt19937_64 rng(6);
    const Matrix g = oracle::gaussian(8, 8, rng);
    const SecondMomentOperator r(g * g.transpose(), OperatorKind::population);
    const auto ref = oracle::jacobi_eigen(r.matrix());
    for (std::size_t k = 1; k <= 8; ++k) {
        const auto p = top_k_projector(r, k);
        const Matrix v = ref.vectors.leftCols(static_cast<Eigen::Index>(k));
        CHECK((p.projector.matrix - v * v.transpose()).norm() < 1e-8);
        CHECK((p.projector.matrix * p.projector.matrix - p.projector.matrix).norm() < 1e-8);
        CHECK(std::abs(p.projector.matrix.trace() - static_cast<double>(k)) < 1e-6);
    }
}

TEST_CASE("subspace distance") {
    Vector e1 = Vector::Zero(3), e2 = Vector::Zero(3);
    e1(0) = 1;
    e2(1) = 1;
    const Projector p{e1 * e1.transpose(), 1}, q{e2 * e2.transpose(), 1};
    CHECK(subspace_distance(p, p) == 0.0);
    CHECK(subspace_distance(p, q) == doctest::Approx(1.0));
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const Matrix a = oracle::orthonormal(6, 2, rng), b = oracle::orthonormal(6, 2, rng);
        const double d = subspace_distance({a * a.transpose(), 2}, {b * b.transpose(), 2});
        CHECK(d >= 0.0);
        CHECK(d <= 1.0 + 1e-12);
    }
}

TEST_CASE("theorem bounds arithmetic") {
    BoundParameters p;
    p.bound_b = 1;
    p.delta = 0.5;
    p.tasks = 100;
    p.eta_bar = 0.1;
    p.eta2_bar = 0.01;
    const double expected = std::sqrt(std::log(2.0) / 100.0) + 0.21;
    auto b = theorem1_bounds(p);
    CHECK(b.op_bound == doctest::Approx(expected).epsilon(1e-14));
    CHECK_FALSE(b.subspace_bound.has_value());
    p.gamma_k = 0.5;
    b = theorem1_bounds(p);
    CHECK(*b.subspace_bound == doctest::Approx(4.0 * expected).epsilon(1e-14));

    BoundParameters clean = p;
    clean.eta_bar = clean.eta2_bar = 0.0;
    CHECK(theorem1_bounds(clean).op_bound == doctest::Approx(std::sqrt(std::log(2.0) / 100.0)));

    p.gamma_k = 0.0;
    CHECK_THROWS_AS(theorem1_bounds(p), Error);
    p.gamma_k.reset();
    CHECK(p.delta_per_task() == doctest::Approx(0.5 / 200));
    CHECK(p.delta_across_tasks() == doctest::Approx(0.25));
}

TEST_CASE("theorem bounds are monotone") {
    const std::vector<double> etas{0.1, 0.2, 0.05};
    auto base = BoundParameters::from_etas(1.0, 0.1, etas);
    base.tasks = 50;
    const double op = theorem1_bounds(base).op_bound;
    auto more_t = base;
    more_t.tasks = 100;
    CHECK(theorem1_bounds(more_t).op_bound < op);
    auto more_b = base;
    more_b.bound_b = 1.5;
    CHECK(theorem1_bounds(more_b).op_bound > op);
    const std::vector<double> bigger{0.1, 0.3, 0.05};
    auto more_eta = BoundParameters::from_etas(1.0, 0.1, bigger);
    more_eta.tasks = 50;
    CHECK(theorem1_bounds(more_eta).op_bound > op);
    CHECK(eta_from_complexity(0.1, 100, 0.01) == doctest::Approx(0.1 + std::sqrt(std::log(100.0) / 200.0)));
}

TEST_CASE("within-task term") {
    auto c = config(8, 3, 20, 9);
    const auto e = sample_ensemble(c);
    CHECK(within_task_term(e.tasks, 1.0).measured == 0.0);

    // One task with an orthogonal perturbation: the 2x2 block [[B^2, B eta], [B eta, eta^2]].
    Vector f = Vector::Zero(4), u = Vector::Zero(4);
    f(0) = 1.0;
    u(1) = 1.0;
    const double eta = 0.3;
    const std::vector<TaskVector> one{{f, f + eta * u}};
    const auto r = within_task_term(one, 1.0);
    const double tr = eta * eta, det = -eta * eta;  // of [[0, eta], [eta, eta^2]]
    const double lmax = 0.5 * (tr + std::sqrt(tr * tr - 4 * det));
    CHECK(r.measured == doctest::Approx(lmax).epsilon(1e-12));
    CHECK(r.measured <= 2 * eta + eta * eta);
    CHECK(r.holds);

    c.eta = {0.2};
    c.perturbation = Perturbation::radial;
    const auto radial = sample_ensemble(c);
    const auto rr = within_task_term(radial.tasks, 1.0);
    CHECK(rr.holds);
    CHECK(rr.cap == doctest::Approx(0.44));
}

TEST_CASE("Davis-Kahan checks") {
    const SecondMomentOperator s(diag({2, 1, 0}), OperatorKind::population);
    const auto same = davis_kahan_check(s, s, 1);
    CHECK(same.lhs == 0.0);
    CHECK(same.holds);

    std::mt19937_64 rng(11);
    for (int t = 0; t < 1000; ++t) {
        const Matrix g = oracle::gaussian(3, 3, rng);
        Matrix e = 0.5 * (g + g.transpose());
        e /= oracle::jacobi_eigen(e).values.cwiseAbs().maxCoeff();
        const SecondMomentOperator pert(s.matrix() + 0.1 * e, OperatorKind::learned_empirical);
        CHECK(davis_kahan_check(s, pert, 1).holds);
    }

    const SecondMomentOperator near(diag({1.001, 1.0, 0.2}), OperatorKind::population);
    const Matrix g = oracle::gaussian(3, 3, rng);
    const SecondMomentOperator np(near.matrix() + 0.05 * (g + g.transpose()), OperatorKind::learned_empirical);
    const auto r = davis_kahan_check(near, np, 1);
    CHECK(r.gamma == doctest::Approx(1e-3));
    CHECK(r.holds);

    const SecondMomentOperator flat(diag({1, 1, 0}), OperatorKind::population);
    CHECK_THROWS_AS(davis_kahan_check(flat, flat, 1), Error);

    const auto study = davis_kahan_study(10, 3, 0.2, 200, 5);
    CHECK(study.violations == 0);
    CHECK(study.max_ratio <= 1.0);
}

TEST_CASE("projection risk") {
    const std::vector<double> spec{1.0, 0.5, 0.25};
    CHECK(optimal_projection_risk(spec, 2) == doctest::Approx(0.25));
    CHECK(optimal_projection_risk(spec, 3) == 0.0);

    std::mt19937_64 rng(12);
    auto c = config(8, 3, 60, 13);
    c.spectrum = {1.0, 0.6, 0.3, 0.1};
    const auto e = sample_ensemble(c);
    std::vector<Vector> fs;
    for (const auto& t : e.tasks) fs.push_back(t.f_star);
    const auto s = second_moment(fs, OperatorKind::true_empirical);
    const auto best = projection_risk(fs, top_k_projector(s, 3).projector);
    CHECK(std::abs(best.excess) < 1e-10);
    for (int trial = 0; trial < 500; ++trial) {
        const Matrix q = oracle::orthonormal(8, 3, rng);
        const auto r = projection_risk(fs, {q * q.transpose(), 3});
        CHECK(r.holds);
        CHECK(r.excess >= -1e-10);
    }
}

TEST_CASE("sampled operators stay within the triangle bound") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto c = config(12, 3, 30, seed);
        c.bound_b = 1.5;
        const auto e = sample_ensemble(c);
        const auto pop = population_operator(e.basis, e.population_eigenvalues);
        const auto emp = second_moment_of_tasks(e.tasks, OperatorKind::true_empirical);
        CHECK(emp.eigenvalues().minCoeff() >= -1e-10);
        CHECK(pop.eigenvalues().minCoeff() >= -1e-10);
        CHECK(spectral_norm_exact(emp.matrix() - pop.matrix()) <= 2 * 1.5 * 1.5);
    }
}

TEST_CASE("convergence study reports") {
    ConvergenceConfig c;
    c.dim = 16;
    c.k = 2;
    c.t_grid = {20, 80, 320};
    c.trials = 10;
    c.seed = 3;
    const auto r = convergence_study(c);
    REQUIRE(r.summary.size() == 3);
    CHECK(r.rows.size() == 30);
    REQUIRE(r.slope.has_value());
    CHECK(*r.slope < 0.0);
    CHECK(r.summary[0].op_bound > r.summary[2].op_bound);
    CHECK(r.gamma_k == doctest::Approx(0.5).epsilon(1e-8));

    const auto again = convergence_study(c);
    for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].op_error == again.rows[i].op_error);

    c.t_grid = {1};
    const auto single = convergence_study(c);
    CHECK_FALSE(single.slope.has_value());
    CHECK(single.rows.size() == 10);
}

TEST_CASE("log-log slope") {
    const std::vector<double> x{1, 2, 4, 8}, y{1, 0.5, 0.25, 0.125};
    CHECK(*log_log_slope(x, y) == doctest::Approx(-1.0));
    const std::vector<double> same{3, 3};
    const std::vector<double> vals{1, 2};
    CHECK_FALSE(log_log_slope(same, vals).has_value());
}
