// SPDX-License-Identifier: Apache-2.0
#include "uws/spectral.hpp"

#include "uws/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace uws {

namespace {

constexpr double kCumulativeSlack = 1e-12;

void check_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) throw_invalid("expected a square matrix");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw_invalid("matrix is not symmetric within 1e-10");
    }
}

}  // namespace

ThinSvd thin_svd(const Matrix& m) {
    if (m.rows() < 1 || m.cols() < 1) throw_invalid("thin_svd: empty matrix");
    if (!m.allFinite()) throw_invalid("thin_svd: matrix has non-finite entries");

    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        const auto cap = 10 * std::max(m.rows(), m.cols());
        throw Error(ErrorKind::numerical_failure,
                    "thin_svd did not converge within the iteration cap of " + std::to_string(cap) +
                        " sweeps");
    }

    ThinSvd out{svd.matrixU(), {}, svd.matrixV()};
    const auto& s = svd.singularValues();
    out.singular_values.assign(s.data(), s.data() + s.size());

    for (Eigen::Index j = 0; j < out.U.cols(); ++j) {
        Eigen::Index arg = 0;
        out.U.col(j).cwiseAbs().maxCoeff(&arg);
        if (out.U(arg, j) < 0.0) {
            out.U.col(j) *= -1.0;
            out.V.col(j) *= -1.0;
        }
    }
    return out;
}

std::vector<double> explained_variance(std::span<const double> singular_values) {
    double total = 0.0;
    for (double s : singular_values) {
        if (!(s >= 0.0)) throw_invalid("singular values must be nonnegative");
        total += s * s;
    }
    if (singular_values.empty() || total == 0.0) {
        throw Error(ErrorKind::degenerate_spectrum, "explained variance of an all-zero spectrum");
    }
    std::vector<double> ratios;
    ratios.reserve(singular_values.size());
    for (double s : singular_values) ratios.push_back(s * s / total);
    return ratios;
}

RankPolicy RankPolicy::cumulative_variance(double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw_invalid("cumulative variance tau must lie in (0, 1]");
    return RankPolicy(Kind::cumulative_variance, tau, std::nullopt, 0);
}

RankPolicy RankPolicy::eigen_floor(double eps) {
    if (!(eps >= 0.0)) throw_invalid("eigen floor eps must be >= 0");
    return RankPolicy(Kind::eigen_floor, eps, std::nullopt, 0);
}

RankPolicy RankPolicy::hard_threshold(std::optional<double> noise_sigma) {
    if (noise_sigma && !(*noise_sigma > 0.0)) throw_invalid("hard threshold noise sigma must be > 0");
    return RankPolicy(Kind::hard_threshold, 0.0, noise_sigma, 0);
}

RankPolicy RankPolicy::fixed_k(std::size_t k) {
    if (k < 1) throw_invalid("fixed_k requires k >= 1");
    return RankPolicy(Kind::fixed_k, 0.0, std::nullopt, k);
}

std::string RankPolicy::describe() const {
    std::ostringstream os;
    const auto num = [](double v) {
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    switch (kind_) {
        case Kind::cumulative_variance: os << "cumulative_variance(" << num(value_) << ")"; break;
        case Kind::eigen_floor: os << "eigen_floor(" << num(value_) << ")"; break;
        case Kind::hard_threshold:
            os << "hard_threshold(";
            if (sigma_) os << num(*sigma_);
            os << ")";
            break;
        case Kind::fixed_k: os << "fixed_k(" << k_ << ")"; break;
    }
    return os.str();
}

RankPolicy RankPolicy::parse(const std::string& text) {
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw_invalid("malformed rank policy '" + text + "'");
    }
    const std::string name = text.substr(0, open);
    const std::string arg = text.substr(open + 1, close - open - 1);
    try {
        if (name == "cumulative_variance") return cumulative_variance(std::stod(arg));
        if (name == "eigen_floor") return eigen_floor(std::stod(arg));
        if (name == "fixed_k") return fixed_k(std::stoul(arg));
        if (name == "hard_threshold") {
            return arg.empty() ? hard_threshold() : hard_threshold(std::stod(arg));
        }
    } catch (const std::logic_error&) {
        throw_invalid("malformed rank policy '" + text + "'");
    }
    throw_invalid("unknown rank policy '" + text + "'");
}

Spectrum make_spectrum(std::vector<double> singular_values, std::size_t rows, std::size_t cols) {
    Spectrum s;
    s.ratios = explained_variance(singular_values);
    s.singular_values = std::move(singular_values);
    s.rows = rows;
    s.cols = cols;
    return s;
}

std::size_t numerical_rank(std::span<const double> ratios) {
    if (ratios.empty()) return 0;
    const double floor = ratios.front() * 1e-24;
    return static_cast<std::size_t>(
        std::count_if(ratios.begin(), ratios.end(), [&](double r) { return r > floor; }));
}

std::size_t select_rank(std::span<const double> ratios, const RankPolicy& policy) {
    if (ratios.empty()) throw_invalid("select_rank: empty ratio list");
    switch (policy.kind()) {
        case RankPolicy::Kind::cumulative_variance: {
            if (policy.tau() >= 1.0) return std::max<std::size_t>(1, numerical_rank(ratios));
            double cumulative = 0.0;
            for (std::size_t i = 0; i < ratios.size(); ++i) {
                cumulative += ratios[i];
                if (cumulative >= policy.tau() - kCumulativeSlack) return i + 1;
            }
            return ratios.size();
        }
        case RankPolicy::Kind::eigen_floor: {
            const auto n = std::count_if(ratios.begin(), ratios.end(),
                                         [&](double r) { return r > policy.eps(); });
            return std::max<std::size_t>(1, static_cast<std::size_t>(n));
        }
        case RankPolicy::Kind::fixed_k: return std::min(policy.k(), ratios.size());
        case RankPolicy::Kind::hard_threshold:
            throw_invalid("hard_threshold rank selection needs singular values and the matrix shape");
    }
    return 1;
}

std::size_t select_rank(const Spectrum& spectrum, const RankPolicy& policy) {
    if (policy.kind() != RankPolicy::Kind::hard_threshold) return select_rank(spectrum.ratios, policy);
    const double cut = hard_threshold_cutoff(spectrum.singular_values, spectrum.rows, spectrum.cols,
                                             policy.noise_sigma());
    const auto n = std::count_if(spectrum.singular_values.begin(), spectrum.singular_values.end(),
                                 [&](double s) { return s > cut; });
    return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

double hard_threshold_lambda(double beta) {
    return std::sqrt(2.0 * (beta + 1.0) +
                     8.0 * beta / ((beta + 1.0) + std::sqrt(beta * beta + 14.0 * beta + 1.0)));
}

double hard_threshold_omega(double beta) {
    return 0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
}

double hard_threshold_cutoff(std::span<const double> singular_values, std::size_t rows,
                             std::size_t cols, std::optional<double> noise_sigma) {
    if (rows == 0 || cols == 0) throw_invalid("hard threshold needs a nonempty matrix shape");
    const double m = static_cast<double>(std::min(rows, cols));
    const double n = static_cast<double>(std::max(rows, cols));
    const double beta = m / n;
    if (noise_sigma) return hard_threshold_lambda(beta) * std::sqrt(n) * *noise_sigma;

    if (singular_values.empty()) throw_invalid("hard threshold needs singular values");
    std::vector<double> sorted(singular_values.begin(), singular_values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t h = sorted.size() / 2;
    const double median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    return hard_threshold_omega(beta) * median;
}

double operator_norm(const Matrix& a, const PowerIterationOptions& options) {
    check_symmetric(a);
    const Eigen::Index n = a.rows();
    if (n == 0) return 0.0;
    if (a.cwiseAbs().maxCoeff() == 0.0) return 0.0;

    const std::size_t cap =
        options.max_iterations ? options.max_iterations : 1000 * static_cast<std::size_t>(n);
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal;

    // The Rayleigh quotient error is quadratic in the residual.
    const double residual_tol = std::sqrt(options.tolerance);
    std::optional<double> best;
    for (std::size_t restart = 0; restart < std::max<std::size_t>(1, options.restarts); ++restart) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
        v.normalize();
        for (std::size_t it = 0; it < cap; ++it) {
            const Vector w = a * v;
            const double rho = w.squaredNorm();
            if (rho == 0.0) break;  // start vector in the null space; restart
            const Vector z = a * w;
            if ((z - rho * v).norm() <= residual_tol * rho) {
                best = std::max(best.value_or(0.0), std::sqrt(rho));
                break;
            }
            v = z / z.norm();
        }
    }
    if (!best) {
        throw Error(ErrorKind::numerical_failure,
                    "operator_norm: power iteration did not converge within the iteration cap of " +
                        std::to_string(cap));
    }
    return *best;
}

SymmetricEigen symmetric_eigen(const Matrix& a) {
    check_symmetric(a);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::numerical_failure, "symmetric eigensolver failed to converge");
    }
    // Eigen returns ascending order.
    SymmetricEigen out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
    return out;
}

double spectral_norm_exact(const Matrix& a) {
    if (a.rows() == 0) return 0.0;
    return symmetric_eigen(a).values.cwiseAbs().maxCoeff();
}

}  // namespace uws
