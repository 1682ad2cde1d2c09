// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/spectral.hpp"
#include "uws/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace uws {

enum class Centering {
    feature,  // one mean per position, averaged over the stacking mode
    global,   // a single scalar mean over every entry
};

const char* to_string(Centering c) noexcept;
Centering parse_centering(const std::string& text);

/// Rank policy for one mode; std::nullopt leaves the mode undecomposed
/// (identity factor).
using ModePolicy = std::optional<RankPolicy>;

struct HosvdOptions {
    Centering centering = Centering::feature;
    std::size_t stacking_mode = 0;
    /// One entry per mode. Empty means cumulative_variance(0.95) on every mode.
    std::vector<ModePolicy> policies;
};

struct ModeLedger {
    bool decomposed = false;
    std::size_t rank = 0;
    std::vector<double> singular_values;
    std::vector<double> ratios;
};

/// Output of the truncated zero-centered HOSVD.
///
/// `mu` has the shape of the input with extent 1 on every broadcast mode
/// (the stacking mode for feature centering, all modes for global centering).
/// An undecomposed mode has an empty factor matrix and acts as the identity.
struct SubspaceModel {
    Shape shape;
    Centering centering = Centering::feature;
    std::size_t stacking_mode = 0;
    DenseTensor mu;
    std::vector<Matrix> factors;
    DenseTensor core;
    std::vector<ModeLedger> ledger;

    std::size_t order() const noexcept { return shape.size(); }
    bool decomposed(std::size_t mode) const { return ledger.at(mode).decomposed; }
    /// Retained extent along `mode` (the full extent when undecomposed).
    std::size_t rank(std::size_t mode) const;
};

/// One model's slice expressed in the factor basis: the centered slice
/// contracted with U^(n)T along every decomposed non-stacking mode.
struct SliceCoefficients {
    std::string id;
    DenseTensor values;
};

struct CenteredTensor {
    DenseTensor mu;
    DenseTensor centered;
};

CenteredTensor center(const DenseTensor& x, Centering centering, std::size_t stacking_mode = 0);

/// x + mu with mu broadcast along its extent-1 modes.
DenseTensor add_broadcast(const DenseTensor& x, const DenseTensor& mu);
DenseTensor subtract_broadcast(const DenseTensor& x, const DenseTensor& mu);

SubspaceModel hosvd_truncated(const DenseTensor& x, const HosvdOptions& options = {});

/// mu + core x_1 U^(1) ... x_N U^(N).
DenseTensor reconstruct(const SubspaceModel& model);

/// `slice` has the model's order; its extent along the stacking mode is free,
/// every other extent must match the model shape.
SliceCoefficients project_slice(const SubspaceModel& model, const DenseTensor& slice);
DenseTensor reconstruct_slice(const SubspaceModel& model, const SliceCoefficients& coeffs);

/// Shape a coefficient tensor must have for a slice with `slice_rows` entries
/// along the stacking mode.
Shape coefficient_shape(const SubspaceModel& model, std::size_t slice_rows);

/// HOSVD of what remains of the centered input after removing the primary
/// subspace along every decomposed non-stacking mode, truncated to k2.
SubspaceModel secondary_subspace(const DenseTensor& x, const SubspaceModel& primary, std::size_t k2);

}  // namespace uws
