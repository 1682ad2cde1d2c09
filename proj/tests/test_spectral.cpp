// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "support/oracles.hpp"
#include "uws/error.hpp"
#include "uws/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using uws::Matrix;
using uws::RankPolicy;

TEST_CASE("thin svd of identity and diagonal matrices") {
    const auto i3 = uws::thin_svd(Matrix::Identity(3, 3));
    for (int i = 0; i < 3; ++i) CHECK(i3.singular_values[i] == doctest::Approx(1.0));

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 2;
    const auto s = uws::thin_svd(d);
    CHECK(s.singular_values[0] == doctest::Approx(3.0));
    CHECK(s.singular_values[1] == doctest::Approx(2.0));
    CHECK((s.U.cwiseAbs() - Matrix::Identity(2, 2)).norm() < 1e-14);
    CHECK((s.V.cwiseAbs() - Matrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("thin svd squares match the Gram eigenvalues") {
    std::mt19937_64 rng(1);
    const Matrix m = oracle::gaussian(5, 3, rng);
    const auto s = uws::thin_svd(m);
    const auto e = oracle::jacobi_eigen(m.transpose() * m);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s.singular_values[i] * s.singular_values[i] - e.values(i)) < 1e-10);
}

TEST_CASE("thin svd invariants on random shapes") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> extent(1, 64);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix m = oracle::gaussian(extent(rng), extent(rng), rng);
        const auto s = uws::thin_svd(m);
        REQUIRE(s.singular_values.size() == static_cast<std::size_t>(std::min(m.rows(), m.cols())));
        CHECK(oracle::orthonormality_defect(s.U) < 1e-10);
        CHECK(oracle::orthonormality_defect(s.V) < 1e-10);
        for (std::size_t i = 1; i < s.singular_values.size(); ++i)
            CHECK(s.singular_values[i] <= s.singular_values[i - 1]);
        CHECK(*std::min_element(s.singular_values.begin(), s.singular_values.end()) >= 0.0);
        const Eigen::Map<const uws::Vector> sv(s.singular_values.data(), static_cast<Eigen::Index>(s.singular_values.size()));
        CHECK((s.U * sv.asDiagonal() * s.V.transpose() - m).norm() <= 1e-8 * m.norm());
        // Largest-magnitude entry of each left vector is nonnegative.
        for (Eigen::Index j = 0; j < s.U.cols(); ++j) {
            Eigen::Index at = 0;
            s.U.col(j).cwiseAbs().maxCoeff(&at);
            CHECK(s.U(at, j) >= 0.0);
        }
    }
}

TEST_CASE("thin svd rejects non-finite input") {
    Matrix m = Matrix::Ones(2, 2);
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(uws::thin_svd(m), uws::Error);
}

TEST_CASE("explained variance") {
    const std::vector<double> one{1.0};
    CHECK(uws::explained_variance(one) == std::vector<double>{1.0});
    const std::vector<double> four_three{4.0, 3.0};
    const auto r = uws::explained_variance(four_three);
    CHECK(r[0] == doctest::Approx(16.0 / 25.0).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(9.0 / 25.0).epsilon(1e-15));
    const std::vector<double> flat(4, 2.5);
    for (double v : uws::explained_variance(flat)) CHECK(v == doctest::Approx(0.25));
    const std::vector<double> zeros(3, 0.0);
    try {
        uws::explained_variance(zeros);
        FAIL("expected degenerate spectrum");
    } catch (const uws::Error& e) {
        CHECK(e.kind() == uws::ErrorKind::degenerate_spectrum);
    }
}

TEST_CASE("select_rank policies") {
    const std::vector<double> ratios{0.6, 0.3, 0.09, 0.005, 0.005};
    CHECK(uws::select_rank(ratios, RankPolicy::eigen_floor(0.01)) == 3);
    CHECK(uws::select_rank(ratios, RankPolicy::cumulative_variance(0.9)) == 2);
    CHECK(uws::select_rank(ratios, RankPolicy::cumulative_variance(0.5)) == 1);
    CHECK(uws::select_rank(ratios, RankPolicy::fixed_k(10)) == 5);
    CHECK(uws::select_rank(ratios, RankPolicy::eigen_floor(0.99)) == 1);
    const std::vector<double> single{1.0};
    for (double tau : {0.1, 0.5, 1.0}) CHECK(uws::select_rank(single, RankPolicy::cumulative_variance(tau)) == 1);
    CHECK_THROWS_AS(RankPolicy::cumulative_variance(0.0), uws::Error);
    CHECK_THROWS_AS(RankPolicy::cumulative_variance(1.5), uws::Error);
    CHECK_THROWS_AS(RankPolicy::fixed_k(0), uws::Error);
    CHECK_THROWS_AS(RankPolicy::eigen_floor(-1), uws::Error);
}

TEST_CASE("tau = 1 gives the numerical rank") {
    std::mt19937_64 rng(4);
    for (int r = 1; r <= 6; ++r) {
        const Matrix m = oracle::gaussian(10, r, rng) * oracle::gaussian(r, 8, rng);
        const auto s = uws::thin_svd(m);
        const auto spec = uws::make_spectrum({s.singular_values.begin(), s.singular_values.end()}, 10, 8);
        std::size_t expected = 0;
        for (double v : spec.singular_values) expected += v > spec.singular_values[0] * 1e-12;
        CHECK(uws::select_rank(spec, RankPolicy::cumulative_variance(1.0)) == expected);
        CHECK(expected == static_cast<std::size_t>(r));
    }
}

TEST_CASE("select_rank is monotone in tau and eps") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix m = oracle::gaussian(12, 9, rng);
        const auto s = uws::thin_svd(m);
        const auto ratios = uws::explained_variance({s.singular_values.data(), 9});
        std::size_t prev = 0;
        for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
            const auto r = uws::select_rank(ratios, RankPolicy::cumulative_variance(std::min(tau, 1.0)));
            CHECK(r >= prev);
            prev = r;
        }
        prev = 100;
        for (double eps = 0.0; eps <= 0.5; eps += 0.01) {
            const auto r = uws::select_rank(ratios, RankPolicy::eigen_floor(eps));
            CHECK(r <= prev);
            prev = r;
        }
    }
}

TEST_CASE("hard threshold on pure noise keeps one component") {
    CHECK(uws::hard_threshold_lambda(1.0) == doctest::Approx(4.0 / std::sqrt(3.0)).epsilon(1e-12));
    std::mt19937_64 rng(7);
    const int trials = 200;
    int clamped = 0;
    for (int t = 0; t < trials; ++t) {
        const Matrix m = oracle::gaussian(100, 100, rng);
        const auto s = uws::thin_svd(m);
        const auto spec = uws::make_spectrum({s.singular_values.begin(), s.singular_values.end()}, 100, 100);
        // The cut is (4/sqrt 3) sqrt(n) sigma for square inputs.
        CHECK(uws::hard_threshold_cutoff(spec.singular_values, 100, 100, 1.0) ==
              doctest::Approx(4.0 / std::sqrt(3.0) * 10.0));
        clamped += uws::select_rank(spec, RankPolicy::hard_threshold(1.0)) == 1;
    }
    CHECK(clamped >= 0.95 * trials);
}

TEST_CASE("hard threshold finds a strong planted rank") {
    std::mt19937_64 rng(8);
    const Matrix signal = 40.0 * oracle::orthonormal(60, 3, rng) * oracle::orthonormal(40, 3, rng).transpose() * 10.0;
    const Matrix m = signal + oracle::gaussian(60, 40, rng);
    const auto s = uws::thin_svd(m);
    const auto spec = uws::make_spectrum({s.singular_values.begin(), s.singular_values.end()}, 60, 40);
    CHECK(uws::select_rank(spec, RankPolicy::hard_threshold(1.0)) == 3);
    CHECK(uws::select_rank(spec, RankPolicy::hard_threshold()) == 3);
    CHECK_THROWS_AS(uws::select_rank(spec.ratios, RankPolicy::hard_threshold()), uws::Error);
}

TEST_CASE("rank policy text round trip") {
    for (const auto& p : {RankPolicy::cumulative_variance(0.95), RankPolicy::eigen_floor(0.01),
                          RankPolicy::hard_threshold(), RankPolicy::hard_threshold(0.5), RankPolicy::fixed_k(16)}) {
        CHECK(RankPolicy::parse(p.describe()) == p);
    }
    CHECK(RankPolicy::cumulative_variance(0.95).describe() == "cumulative_variance(0.95)");
    CHECK_THROWS_AS(RankPolicy::parse("bogus"), uws::Error);
}

TEST_CASE("operator norm by power iteration") {
    CHECK(uws::operator_norm(Matrix::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-10));
    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 3, 1, -2;
    CHECK(uws::operator_norm(d) == doctest::Approx(3.0).epsilon(1e-10));
    Matrix n = Matrix::Zero(3, 3);
    n.diagonal() << 1, -5, 2;
    CHECK(uws::operator_norm(n) == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(uws::operator_norm(Matrix::Zero(3, 3)) == 0.0);

    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix g = oracle::gaussian(6, 6, rng);
        const Matrix a = 0.5 * (g + g.transpose());
        const auto e = oracle::jacobi_eigen(a);
        const double expected = e.values.cwiseAbs().maxCoeff();
        const double got = uws::operator_norm(a);
        CHECK(std::abs(got - expected) <= 1e-8 * expected);
        CHECK(std::abs(uws::spectral_norm_exact(a) - expected) <= 1e-12 * expected);
        for (int k = 0; k < 10; ++k) {
            const uws::Vector v = oracle::gaussian(6, 1, rng).col(0).normalized();
            CHECK(got >= std::abs(v.dot(a * v)) - 1e-12);
        }
    }
    Matrix asym = Matrix::Identity(2, 2);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS(uws::operator_norm(asym), uws::Error);
}

TEST_CASE("symmetric eigen matches the Jacobi oracle") {
    std::mt19937_64 rng(12);
    const Matrix g = oracle::gaussian(7, 7, rng);
    const Matrix a = g * g.transpose();
    const auto mine = uws::symmetric_eigen(a);
    const auto ref = oracle::jacobi_eigen(a);
    for (int i = 0; i < 7; ++i) {
        CHECK(std::abs(mine.values(i) - ref.values(i)) < 1e-10 * ref.values(0));
        CHECK(std::abs(std::abs(mine.vectors.col(i).dot(ref.vectors.col(i))) - 1.0) < 1e-8);
    }
}
