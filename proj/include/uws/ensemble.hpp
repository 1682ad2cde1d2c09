// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/container.hpp"
#include "uws/hosvd.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uws {

/// Per-layer weight matrices of one model, in file order.
struct ModelWeights {
    std::string model_id;
    std::vector<Layer> layers;

    const Layer* find(const std::string& name) const;
    /// Throws invalid-argument when absent.
    const Layer& layer(const std::string& name) const;
};

ModelWeights load_weights(const std::filesystem::path& path);
void save_weights(const ModelWeights& w, const std::filesystem::path& path);

/// How one layer of T models becomes a tensor. Models always occupy mode 0.
enum class StackingLayout {
    concat_rows,  // (T*rows) x cols
    model_mode,   // T x rows x cols
    flatten,      // T x (rows*cols), each layer vectorized row-major
};

const char* to_string(StackingLayout s) noexcept;
StackingLayout parse_stacking(const std::string& text);

DenseTensor stack_layer(std::span<const ModelWeights> models, const std::string& layer, StackingLayout layout);
/// The single-model slab of a stack.
DenseTensor layer_slice(const Matrix& m, StackingLayout layout);
Matrix slice_to_matrix(const DenseTensor& slice, std::size_t rows, std::size_t cols, StackingLayout layout);

struct ExtractionConfig {
    std::string architecture_id = "uws";
    RankPolicy policy = RankPolicy::cumulative_variance(0.95);
    /// Truncate the model mode too (full algorithm); false leaves it as identity.
    bool decompose_stacking_mode = true;
    Centering centering = Centering::feature;
    StackingLayout layout = StackingLayout::concat_rows;
    /// nullopt excludes the first and last layer of the first model.
    std::optional<std::vector<std::string>> excluded_layers;
};

struct LayerSubspace {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Dtype dtype = Dtype::f64;
    SubspaceModel model;
};

struct UniversalSubspace {
    std::string architecture_id;
    ExtractionConfig config;
    std::vector<LayerSubspace> layers;
    std::vector<std::string> excluded_layers;
    std::vector<std::string> provenance;

    const LayerSubspace* find(const std::string& name) const;
    const LayerSubspace& layer(const std::string& name) const;
    /// Mode whose factor spans the per-model feature directions (the last mode).
    std::size_t feature_mode() const;
};

UniversalSubspace extract_universal(std::span<const ModelWeights> models, const ExtractionConfig& config);

Container subspace_to_container(const UniversalSubspace& u);
UniversalSubspace subspace_from_container(const Container& c);
UniversalSubspace load_subspace(const std::filesystem::path& path);
void save_subspace(const UniversalSubspace& u, const std::filesystem::path& path);

struct LayerScree {
    std::string layer;
    std::size_t mode = 0;
    std::vector<double> singular_values;
    std::vector<double> ratios;
};

struct ScreeReport {
    std::vector<LayerScree> layers;
    /// Component-wise mean and population standard deviation across layers;
    /// shorter spectra are padded with zero ratios.
    std::vector<double> mean_ratios;
    std::vector<double> std_ratios;
};

/// Scree of `mode` in every layer (default: the feature mode).
ScreeReport scree_report(const UniversalSubspace& u, std::optional<std::size_t> mode = std::nullopt);
ScreeReport aggregate_scree(std::vector<LayerScree> layers);

struct LayerCoefficients {
    std::string layer;
    SliceCoefficients coefficients;
};

struct CoefficientSet {
    std::string model_id;
    std::vector<LayerCoefficients> layers;
    /// Excluded layers carried through projection unchanged.
    std::vector<Layer> passthrough;

    const LayerCoefficients* find(const std::string& name) const;
    /// Total number of coefficient entries.
    std::size_t parameter_count() const;
};

CoefficientSet project_model(const UniversalSubspace& u, const ModelWeights& w);
ModelWeights reconstruct_model(const UniversalSubspace& u, const CoefficientSet& c);

Container coefficients_to_container(const CoefficientSet& c);
CoefficientSet coefficients_from_container(const UniversalSubspace& u, const Container& c);

struct MergeReport {
    std::string method = "coefficient_average";
    std::vector<std::string> model_ids;
    std::vector<double> weights;
    std::vector<std::string> averaged_excluded_layers;
    std::vector<std::string> omitted_layers;
};

struct MergeResult {
    ModelWeights merged;
    MergeReport report;
};

/// Weighted mean of per-model coefficients, reconstructed through the
/// subspace. Weights default to uniform; given weights must be nonnegative
/// and sum to 1.
MergeResult merge_models(const UniversalSubspace& u, std::span<const ModelWeights> models,
                         std::optional<std::vector<double>> weights = std::nullopt,
                         const std::string& merged_id = "merged");

/// Every count is explicit so the accounting can be audited.
struct MemoryAccounting {
    std::uint64_t models = 0;
    std::uint64_t per_model_params = 0;
    std::uint64_t basis_params = 0;
    std::uint64_t coeff_params_per_model = 0;
    std::uint64_t mean_params = 0;
};

/// (T * per_model) / (basis + mean + T * coeffs).
double memory_savings(const MemoryAccounting& a);

struct MemoryPreset {
    std::string name;
    std::string description;
    MemoryAccounting accounting;
};

/// Parameterizations behind the reported 19x (LoRA adapters) and >= 100x
/// (ViT) ratios, plus a plain arithmetic example.
std::vector<MemoryPreset> memory_presets();

/// Trainable parameters of coefficient-only adaptation: k per matrix.
std::uint64_t coefficient_parameter_count(std::uint64_t k, std::uint64_t matrices);

enum class AdaptMethod { closed_form, gradient };

struct AdaptOptions {
    AdaptMethod method = AdaptMethod::closed_form;
    /// Gradient step; nullopt uses 0.5 / L.
    std::optional<double> learning_rate;
    std::size_t epochs = 2000;
    /// Added to the normal matrix diagonal; 0 means none.
    double ridge = 0.0;
};

struct FitReport {
    std::string layer;
    std::string method;
    std::size_t trainable_params = 0;
    std::size_t samples = 0;
    double lipschitz = 0.0;  // largest eigenvalue of the normal matrix
    double learning_rate = 0.0;
    double ridge = 0.0;
    std::size_t epochs_run = 0;
    std::vector<double> loss_history;  // one entry per epoch (gradient) or one (closed form)
    double final_loss = 0.0;
    double relative_residual = 0.0;
};

struct AdaptResult {
    SliceCoefficients coefficients;
    FitReport report;
};

/// Fits the layer's coefficients so that X * W(c)^T ~= Y, where W(c) is the
/// reconstructed rows x cols layer; X is n x cols and Y is n x rows.
AdaptResult adapt_coefficients(const UniversalSubspace& u, const std::string& layer, const Matrix& x,
                               const Matrix& y, const AdaptOptions& options = {});

/// Models whose layers share a planted row space: layer l of model t is
/// C_{t,l} B_l^T plus Gaussian noise scaled to `noise` times the signal norm,
/// with B_l (cols x rank) orthonormal and shared by every model.
struct PlantedEnsembleConfig {
    std::size_t models = 3;
    std::size_t layers = 3;
    std::size_t rows = 8;
    std::size_t cols = 16;
    std::size_t rank = 4;
    double noise = 1e-3;
    std::uint64_t seed = 0;
    /// Index of the first model; models past the training set reuse the bases.
    std::size_t first_model = 0;
    Dtype dtype = Dtype::f64;
    std::string prefix = "model";
};

std::vector<ModelWeights> planted_ensemble(const PlantedEnsembleConfig& cfg);
/// The shared cols x rank basis of one layer.
Matrix planted_basis(const PlantedEnsembleConfig& cfg, std::size_t layer);

}  // namespace uws
