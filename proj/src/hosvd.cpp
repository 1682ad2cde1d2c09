// SPDX-License-Identifier: Apache-2.0
#include "uws/hosvd.hpp"

#include "uws/error.hpp"

#include <cmath>
#include <string>

namespace uws {

namespace {

// Applies out[i] = op(x[i], mu[bcast(i)]) where mu has extent 1 or the
// matching extent on each mode.
template <typename Op>
DenseTensor broadcast_apply(const DenseTensor& x, const DenseTensor& mu, Op op) {
    if (mu.order() != x.order()) throw_invalid("broadcast: order mismatch");
    const std::size_t n = x.order();
    std::vector<std::size_t> mu_strides(n, 0);
    std::size_t s = 1;
    for (std::size_t k = n; k-- > 0;) {
        if (mu.extent(k) == x.extent(k)) {
            mu_strides[k] = s;
        } else if (mu.extent(k) != 1) {
            throw_invalid("broadcast: mean extent " + std::to_string(mu.extent(k)) +
                          " incompatible with extent " + std::to_string(x.extent(k)) + " on mode " +
                          std::to_string(k));
        }
        s *= mu.extent(k);
    }
    DenseTensor out(x.shape());
    auto o = out.data();
    const auto xd = x.data();
    const auto md = mu.data();
    std::vector<std::size_t> idx(n, 0);
    std::size_t m = 0;
    for (std::size_t flat = 0; flat < xd.size(); ++flat) {
        o[flat] = op(xd[flat], md[m]);
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < x.extent(k)) {
                m += mu_strides[k];
                break;
            }
            m -= mu_strides[k] * (x.extent(k) - 1);
            idx[k] = 0;
        }
    }
    return out;
}

void check_mode_policies(const SubspaceModel& m, std::size_t order) {
    if (m.stacking_mode >= order) {
        throw_invalid("stacking mode " + std::to_string(m.stacking_mode) + " out of range for order " +
                      std::to_string(order));
    }
}

// Per-mode SVD + truncation of an already centered tensor, then the core.
SubspaceModel factorize(const DenseTensor& centered, const std::vector<ModePolicy>& policies,
                        SubspaceModel model) {
    const std::size_t order = centered.order();
    model.shape = centered.shape();
    model.factors.assign(order, Matrix());
    model.ledger.assign(order, ModeLedger{});

    DenseTensor core = centered;
    for (std::size_t n = 0; n < order; ++n) {
        ModeLedger& ledger = model.ledger[n];
        if (!policies[n]) {
            ledger.rank = centered.extent(n);
            continue;
        }
        const Matrix unfolded = unfold(centered, n);
        ThinSvd svd = thin_svd(unfolded);
        const Spectrum spectrum = make_spectrum(svd.singular_values, static_cast<std::size_t>(unfolded.rows()),
                                                static_cast<std::size_t>(unfolded.cols()));
        ledger.decomposed = true;
        ledger.rank = select_rank(spectrum, *policies[n]);
        ledger.singular_values = spectrum.singular_values;
        ledger.ratios = spectrum.ratios;
        model.factors[n] = svd.U.leftCols(static_cast<Eigen::Index>(ledger.rank));
        core = mode_product(core, model.factors[n].transpose(), n);
    }
    model.core = std::move(core);
    return model;
}

void check_slice_shape(const SubspaceModel& model, const DenseTensor& slice) {
    if (slice.order() != model.order()) {
        throw_invalid("slice order " + std::to_string(slice.order()) + " does not match model order " +
                      std::to_string(model.order()));
    }
    for (std::size_t n = 0; n < model.order(); ++n) {
        if (n != model.stacking_mode && slice.extent(n) != model.shape[n]) {
            throw_invalid("slice extent " + std::to_string(slice.extent(n)) + " on mode " + std::to_string(n) +
                          " does not match model extent " + std::to_string(model.shape[n]));
        }
    }
}

}  // namespace

const char* to_string(Centering c) noexcept {
    return c == Centering::feature ? "feature" : "global";
}

Centering parse_centering(const std::string& text) {
    if (text == "feature") return Centering::feature;
    if (text == "global") return Centering::global;
    throw_invalid("unknown centering '" + text + "' (expected feature|global)");
}

std::size_t SubspaceModel::rank(std::size_t mode) const {
    return ledger.at(mode).rank;
}

CenteredTensor center(const DenseTensor& x, Centering centering, std::size_t stacking_mode) {
    if (stacking_mode >= x.order()) throw_invalid("center: stacking mode out of range");
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw_invalid("center: tensor has non-finite entries");
    }
    DenseTensor mu;
    if (centering == Centering::global) {
        double sum = 0.0;
        for (double v : x.data()) sum += v;
        mu = DenseTensor(Shape(x.order(), 1), {sum / static_cast<double>(x.size())});
    } else {
        const Matrix unfolded = unfold(x, stacking_mode);
        Shape mu_shape = x.shape();
        mu_shape[stacking_mode] = 1;
        mu = fold(unfolded.colwise().mean(), stacking_mode, mu_shape);
    }
    DenseTensor centered = subtract_broadcast(x, mu);
    return {std::move(mu), std::move(centered)};
}

DenseTensor add_broadcast(const DenseTensor& x, const DenseTensor& mu) {
    return broadcast_apply(x, mu, [](double a, double b) { return a + b; });
}

DenseTensor subtract_broadcast(const DenseTensor& x, const DenseTensor& mu) {
    return broadcast_apply(x, mu, [](double a, double b) { return a - b; });
}

SubspaceModel hosvd_truncated(const DenseTensor& x, const HosvdOptions& options) {
    const std::size_t order = x.order();
    if (order < 2) throw_invalid("hosvd: tensor order must be at least 2, got " + std::to_string(order));
    std::vector<ModePolicy> policies = options.policies;
    if (policies.empty()) policies.assign(order, RankPolicy::cumulative_variance(0.95));
    if (policies.size() != order) {
        throw_invalid("hosvd: " + std::to_string(policies.size()) + " mode policies given for an order-" +
                      std::to_string(order) + " tensor");
    }
    SubspaceModel model;
    model.centering = options.centering;
    model.stacking_mode = options.stacking_mode;
    check_mode_policies(model, order);

    auto [mu, centered] = center(x, options.centering, options.stacking_mode);
    const double norm = frobenius_norm(centered);
    if (norm == 0.0 || norm <= 1e-13 * frobenius_norm(x)) {
        throw Error(ErrorKind::degenerate_spectrum, "hosvd: centered tensor is numerically zero");
    }
    model.mu = std::move(mu);
    return factorize(centered, policies, std::move(model));
}

DenseTensor reconstruct(const SubspaceModel& model) {
    DenseTensor t = model.core;
    if (t.order() != model.order() || model.factors.size() != model.order()) {
        throw Error(ErrorKind::internal_consistency, "reconstruct: core order does not match the model");
    }
    for (std::size_t n = 0; n < model.order(); ++n) {
        if (!model.decomposed(n)) continue;
        const Matrix& u = model.factors[n];
        if (static_cast<std::size_t>(u.cols()) != t.extent(n)) {
            throw Error(ErrorKind::internal_consistency,
                        "reconstruct: factor " + std::to_string(n) + " does not match the core");
        }
        t = mode_product(t, u, n);
    }
    if (t.shape() != model.shape) {
        throw Error(ErrorKind::internal_consistency, "reconstruct: expanded core does not match the model shape");
    }
    return add_broadcast(t, model.mu);
}

Shape coefficient_shape(const SubspaceModel& model, std::size_t slice_rows) {
    Shape shape(model.order());
    for (std::size_t n = 0; n < model.order(); ++n) {
        shape[n] = n == model.stacking_mode ? slice_rows : model.rank(n);
    }
    return shape;
}

SliceCoefficients project_slice(const SubspaceModel& model, const DenseTensor& slice) {
    check_slice_shape(model, slice);
    DenseTensor t = subtract_broadcast(slice, model.mu);
    for (std::size_t n = 0; n < model.order(); ++n) {
        if (n == model.stacking_mode || !model.decomposed(n)) continue;
        t = mode_product(t, model.factors[n].transpose(), n);
    }
    return {"", std::move(t)};
}

DenseTensor reconstruct_slice(const SubspaceModel& model, const SliceCoefficients& coeffs) {
    const DenseTensor& c = coeffs.values;
    if (c.order() != model.order()) throw_invalid("coefficient order does not match the model");
    if (c.shape() != coefficient_shape(model, c.extent(model.stacking_mode))) {
        throw_invalid("coefficient shape does not match the model factors");
    }
    DenseTensor t = c;
    for (std::size_t n = 0; n < model.order(); ++n) {
        if (n == model.stacking_mode || !model.decomposed(n)) continue;
        t = mode_product(t, model.factors[n], n);
    }
    return add_broadcast(t, model.mu);
}

SubspaceModel secondary_subspace(const DenseTensor& x, const SubspaceModel& primary, std::size_t k2) {
    if (x.shape() != primary.shape) throw_invalid("secondary_subspace: tensor shape does not match the model");
    if (k2 < 1) throw_invalid("secondary_subspace: k2 must be >= 1");

    const DenseTensor centered = subtract_broadcast(x, primary.mu);
    DenseTensor residual = centered;
    for (std::size_t n = 0; n < primary.order(); ++n) {
        if (n == primary.stacking_mode || !primary.decomposed(n)) continue;
        const Matrix& u = primary.factors[n];
        const Matrix complement = Matrix::Identity(u.rows(), u.rows()) - u * u.transpose();
        residual = mode_product(residual, complement, n);
    }
    const double norm = frobenius_norm(residual);
    if (norm == 0.0 || norm <= 1e-10 * frobenius_norm(centered)) {
        throw Error(ErrorKind::degenerate_spectrum,
                    "secondary_subspace: residual after removing the primary subspace is numerically zero");
    }

    std::vector<ModePolicy> policies(primary.order());
    for (std::size_t n = 0; n < primary.order(); ++n) {
        if (!primary.decomposed(n)) continue;
        if (n != primary.stacking_mode) {
            const auto sv = thin_svd(unfold(residual, n)).singular_values;
            const std::size_t remaining = numerical_rank(explained_variance(sv));
            if (k2 > remaining) {
                throw_invalid("secondary_subspace: k2 = " + std::to_string(k2) + " exceeds the remaining rank " +
                              std::to_string(remaining) + " on mode " + std::to_string(n));
            }
        }
        policies[n] = RankPolicy::fixed_k(k2);
    }

    SubspaceModel model;
    model.centering = primary.centering;
    model.stacking_mode = primary.stacking_mode;
    model.mu = primary.mu;
    return factorize(residual, policies, std::move(model));
}

}  // namespace uws
