// SPDX-License-Identifier: Apache-2.0
#include "uws/ensemble.hpp"

#include "uws/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <random>
#include <set>

namespace uws {

namespace {

using json = nlohmann::ordered_json;

constexpr std::size_t kModelMode = 0;

Container weights_container(const ModelWeights& w) {
    return Container{w.model_id, w.layers, nullptr};
}

std::string factor_name(const std::string& layer, std::size_t mode) {
    return "U/" + layer + "/" + std::to_string(mode);
}

std::string ledger_name(const std::string& layer, std::size_t mode) {
    return "ledger/" + layer + "/" + std::to_string(mode);
}

Matrix row_matrix(const DenseTensor& t) {
    Matrix m(1, static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = t[i];
    return m;
}

DenseTensor tensor_from_row(const Matrix& m, const Shape& shape, const std::string& what) {
    if (static_cast<std::size_t>(m.size()) != shape_size(shape)) {
        throw Error(ErrorKind::internal_consistency, what + ": stored size does not match the recorded shape");
    }
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return DenseTensor(shape, std::move(data));
}

const Layer& require_layer(const Container& c, const std::string& name) {
    const Layer* l = c.find(name);
    if (!l) throw Error(ErrorKind::internal_consistency, "subspace file is missing entry '" + name + "'");
    return *l;
}

std::size_t slice_rows(StackingLayout layout, std::size_t rows) {
    return layout == StackingLayout::concat_rows ? rows : 1;
}

json config_json(const ExtractionConfig& c) {
    json j;
    j["policy"] = c.policy.describe();
    j["decompose_stacking_mode"] = c.decompose_stacking_mode;
    j["centering"] = to_string(c.centering);
    j["stacking"] = to_string(c.layout);
    if (c.excluded_layers) j["excluded_layers"] = *c.excluded_layers;
    return j;
}

Matrix layer_basis_product(const Matrix& x, const Matrix& w) {
    return x * w.transpose();
}

Matrix flat_column(const Matrix& m) {
    // Row-major vectorization as a column.
    Matrix out(m.size(), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i * m.cols() + j, 0) = m(i, j);
    return out;
}

}  // namespace

const Layer* ModelWeights::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return &l;
    return nullptr;
}

const Layer& ModelWeights::layer(const std::string& name) const {
    const Layer* l = find(name);
    if (!l) throw_invalid("model '" + model_id + "' has no layer '" + name + "'");
    return *l;
}

ModelWeights load_weights(const std::filesystem::path& path) {
    Container c = read_container(path);
    return ModelWeights{std::move(c.model_id), std::move(c.layers)};
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
    write_container(path, weights_container(w));
}

const char* to_string(StackingLayout s) noexcept {
    switch (s) {
        case StackingLayout::concat_rows: return "concat_rows";
        case StackingLayout::model_mode: return "model_mode";
        case StackingLayout::flatten: return "flatten";
    }
    return "unknown";
}

StackingLayout parse_stacking(const std::string& text) {
    if (text == "concat_rows" || text == "2") return StackingLayout::concat_rows;
    if (text == "model_mode" || text == "3") return StackingLayout::model_mode;
    if (text == "flatten") return StackingLayout::flatten;
    throw_invalid("unknown stacking '" + text + "' (expected concat_rows|model_mode|flatten)");
}

DenseTensor layer_slice(const Matrix& m, StackingLayout layout) {
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    DenseTensor t = DenseTensor::from_matrix(m);
    switch (layout) {
        case StackingLayout::concat_rows: return t;
        case StackingLayout::model_mode: return DenseTensor({1, rows, cols}, {t.data().begin(), t.data().end()});
        case StackingLayout::flatten: return DenseTensor({1, rows * cols}, {t.data().begin(), t.data().end()});
    }
    return t;
}

Matrix slice_to_matrix(const DenseTensor& slice, std::size_t rows, std::size_t cols, StackingLayout layout) {
    if (slice.size() != rows * cols) throw_invalid("slice size does not match the layer shape");
    if (layout == StackingLayout::concat_rows && (slice.order() != 2 || slice.extent(0) != rows)) {
        throw_invalid("slice shape does not match the layer shape");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = slice[i * cols + j];
    return m;
}

DenseTensor stack_layer(std::span<const ModelWeights> models, const std::string& layer, StackingLayout layout) {
    if (models.empty()) throw_invalid("stack_layer: no models");
    const Layer* first = models.front().find(layer);
    if (!first) throw_invalid("stack_layer: model '" + models.front().model_id + "' has no layer '" + layer + "'");
    const auto rows = static_cast<std::size_t>(first->values.rows());
    const auto cols = static_cast<std::size_t>(first->values.cols());

    std::vector<std::string> offenders;
    for (const auto& m : models) {
        const Layer* l = m.find(layer);
        if (!l || static_cast<std::size_t>(l->values.rows()) != rows ||
            static_cast<std::size_t>(l->values.cols()) != cols) {
            offenders.push_back(m.model_id);
        }
    }
    if (!offenders.empty()) {
        std::string list;
        for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
        throw_invalid("stack_layer: layer '" + layer + "' missing or shaped differently from " +
                      std::to_string(rows) + "x" + std::to_string(cols) + " in: " + list);
    }

    const std::size_t t = models.size();
    Shape shape;
    switch (layout) {
        case StackingLayout::concat_rows: shape = {t * rows, cols}; break;
        case StackingLayout::model_mode: shape = {t, rows, cols}; break;
        case StackingLayout::flatten: shape = {t, rows * cols}; break;
    }
    // Every layout places model m's entries in the contiguous block
    // [m * rows * cols, (m + 1) * rows * cols) in row-major order.
    std::vector<double> data;
    data.reserve(t * rows * cols);
    for (const auto& m : models) {
        const Matrix& v = m.layer(layer).values;
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j) data.push_back(v(i, j));
    }
    return DenseTensor(std::move(shape), std::move(data));
}

const LayerSubspace* UniversalSubspace::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return &l;
    return nullptr;
}

const LayerSubspace& UniversalSubspace::layer(const std::string& name) const {
    const LayerSubspace* l = find(name);
    if (!l) throw_invalid("subspace has no layer '" + name + "'");
    return *l;
}

std::size_t UniversalSubspace::feature_mode() const {
    return config.layout == StackingLayout::model_mode ? 2 : 1;
}

UniversalSubspace extract_universal(std::span<const ModelWeights> models, const ExtractionConfig& config) {
    if (models.empty()) throw_invalid("extract_universal: no models");

    UniversalSubspace u;
    u.architecture_id = config.architecture_id;
    u.config = config;
    for (const auto& m : models) u.provenance.push_back(m.model_id);

    const auto& reference = models.front().layers;
    if (config.excluded_layers) {
        u.excluded_layers = *config.excluded_layers;
    } else if (!reference.empty()) {
        u.excluded_layers.push_back(reference.front().name);
        if (reference.size() > 1) u.excluded_layers.push_back(reference.back().name);
    }
    const std::set<std::string> excluded(u.excluded_layers.begin(), u.excluded_layers.end());

    for (const auto& layer : reference) {
        if (excluded.count(layer.name)) continue;
        const DenseTensor x = stack_layer(models, layer.name, config.layout);

        HosvdOptions options;
        options.centering = config.centering;
        options.stacking_mode = kModelMode;
        options.policies.assign(x.order(), config.policy);
        if (!config.decompose_stacking_mode) options.policies[kModelMode] = std::nullopt;

        LayerSubspace ls;
        ls.name = layer.name;
        ls.rows = static_cast<std::size_t>(layer.values.rows());
        ls.cols = static_cast<std::size_t>(layer.values.cols());
        ls.dtype = layer.dtype;
        ls.model = hosvd_truncated(x, options);
        u.layers.push_back(std::move(ls));
    }
    if (u.layers.empty()) throw_invalid("extract_universal: no shared layers remain after exclusions");
    return u;
}

Container subspace_to_container(const UniversalSubspace& u) {
    Container c;
    c.model_id = u.architecture_id;
    json meta;
    meta["kind"] = "universal_subspace";
    meta["architecture_id"] = u.architecture_id;
    meta["config"] = config_json(u.config);
    meta["excluded_layers"] = u.excluded_layers;
    meta["provenance"] = u.provenance;
    meta["layers"] = json::array();
    for (const auto& l : u.layers) {
        const SubspaceModel& m = l.model;
        json entry;
        entry["name"] = l.name;
        entry["rows"] = l.rows;
        entry["cols"] = l.cols;
        entry["dtype"] = to_string(l.dtype);
        entry["shape"] = m.shape;
        json ranks = json::array();
        json decomposed = json::array();
        for (std::size_t n = 0; n < m.order(); ++n) {
            ranks.push_back(m.rank(n));
            decomposed.push_back(m.decomposed(n));
        }
        entry["ranks"] = ranks;
        entry["decomposed"] = decomposed;
        meta["layers"].push_back(entry);

        c.layers.push_back({"mu/" + l.name, row_matrix(m.mu), Dtype::f64});
        for (std::size_t n = 0; n < m.order(); ++n) {
            if (!m.decomposed(n)) continue;
            c.layers.push_back({factor_name(l.name, n), m.factors[n], Dtype::f64});
            const auto& led = m.ledger[n];
            Matrix ledger(2, static_cast<Eigen::Index>(led.singular_values.size()));
            for (std::size_t i = 0; i < led.singular_values.size(); ++i) {
                ledger(0, static_cast<Eigen::Index>(i)) = led.singular_values[i];
                ledger(1, static_cast<Eigen::Index>(i)) = led.ratios[i];
            }
            c.layers.push_back({ledger_name(l.name, n), ledger, Dtype::f64});
        }
        c.layers.push_back({"core/" + l.name, row_matrix(m.core), Dtype::f64});
    }
    c.meta = std::move(meta);
    return c;
}

UniversalSubspace subspace_from_container(const Container& c) {
    const json& meta = c.meta;
    if (!meta.is_object() || meta.value("kind", "") != "universal_subspace") {
        throw_invalid("container '" + c.model_id + "' is not a universal subspace file");
    }
    UniversalSubspace u;
    try {
        u.architecture_id = meta.at("architecture_id").get<std::string>();
        const json& cfg = meta.at("config");
        u.config.architecture_id = u.architecture_id;
        u.config.policy = RankPolicy::parse(cfg.at("policy").get<std::string>());
        u.config.decompose_stacking_mode = cfg.at("decompose_stacking_mode").get<bool>();
        u.config.centering = parse_centering(cfg.at("centering").get<std::string>());
        u.config.layout = parse_stacking(cfg.at("stacking").get<std::string>());
        if (cfg.contains("excluded_layers")) u.config.excluded_layers = cfg.at("excluded_layers").get<std::vector<std::string>>();
        u.excluded_layers = meta.at("excluded_layers").get<std::vector<std::string>>();
        u.provenance = meta.at("provenance").get<std::vector<std::string>>();

        for (const auto& entry : meta.at("layers")) {
            LayerSubspace ls;
            ls.name = entry.at("name").get<std::string>();
            ls.rows = entry.at("rows").get<std::size_t>();
            ls.cols = entry.at("cols").get<std::size_t>();
            ls.dtype = entry.at("dtype").get<std::string>() == "f32" ? Dtype::f32 : Dtype::f64;
            SubspaceModel& m = ls.model;
            m.shape = entry.at("shape").get<Shape>();
            m.centering = u.config.centering;
            m.stacking_mode = kModelMode;
            const auto ranks = entry.at("ranks").get<std::vector<std::size_t>>();
            const auto decomposed = entry.at("decomposed").get<std::vector<bool>>();
            if (ranks.size() != m.shape.size() || decomposed.size() != m.shape.size()) {
                throw Error(ErrorKind::internal_consistency, "layer '" + ls.name + "' rank list does not match its order");
            }

            Shape mu_shape = m.centering == Centering::global ? Shape(m.shape.size(), 1) : m.shape;
            mu_shape[kModelMode] = 1;
            m.mu = tensor_from_row(require_layer(c, "mu/" + ls.name).values, mu_shape, "mu/" + ls.name);

            m.factors.assign(m.shape.size(), Matrix());
            m.ledger.assign(m.shape.size(), ModeLedger{});
            Shape core_shape(m.shape.size());
            for (std::size_t n = 0; n < m.shape.size(); ++n) {
                ModeLedger& led = m.ledger[n];
                led.decomposed = decomposed[n];
                led.rank = ranks[n];
                core_shape[n] = ranks[n];
                if (!led.decomposed) continue;
                m.factors[n] = require_layer(c, factor_name(ls.name, n)).values;
                if (static_cast<std::size_t>(m.factors[n].rows()) != m.shape[n] ||
                    static_cast<std::size_t>(m.factors[n].cols()) != ranks[n]) {
                    throw Error(ErrorKind::internal_consistency, "factor " + factor_name(ls.name, n) + " has the wrong shape");
                }
                const Matrix& ledger = require_layer(c, ledger_name(ls.name, n)).values;
                if (ledger.rows() != 2) throw Error(ErrorKind::internal_consistency, "malformed ledger for '" + ls.name + "'");
                for (Eigen::Index i = 0; i < ledger.cols(); ++i) {
                    led.singular_values.push_back(ledger(0, i));
                    led.ratios.push_back(ledger(1, i));
                }
            }
            m.core = tensor_from_row(require_layer(c, "core/" + ls.name).values, core_shape, "core/" + ls.name);
            u.layers.push_back(std::move(ls));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::internal_consistency, std::string("malformed subspace metadata: ") + e.what());
    }
    return u;
}

UniversalSubspace load_subspace(const std::filesystem::path& path) {
    return subspace_from_container(read_container(path));
}

void save_subspace(const UniversalSubspace& u, const std::filesystem::path& path) {
    write_container(path, subspace_to_container(u));
}

ScreeReport aggregate_scree(std::vector<LayerScree> layers) {
    ScreeReport r;
    r.layers = std::move(layers);
    std::size_t width = 0;
    for (const auto& l : r.layers) width = std::max(width, l.ratios.size());
    r.mean_ratios.assign(width, 0.0);
    r.std_ratios.assign(width, 0.0);
    if (r.layers.empty()) return r;
    const double count = static_cast<double>(r.layers.size());
    for (std::size_t i = 0; i < width; ++i) {
        double sum = 0.0;
        for (const auto& l : r.layers) sum += i < l.ratios.size() ? l.ratios[i] : 0.0;
        const double mean = sum / count;
        double ss = 0.0;
        for (const auto& l : r.layers) {
            const double d = (i < l.ratios.size() ? l.ratios[i] : 0.0) - mean;
            ss += d * d;
        }
        r.mean_ratios[i] = mean;
        r.std_ratios[i] = std::sqrt(ss / count);
    }
    return r;
}

ScreeReport scree_report(const UniversalSubspace& u, std::optional<std::size_t> mode) {
    std::vector<LayerScree> layers;
    for (const auto& l : u.layers) {
        const std::size_t n = mode.value_or(u.feature_mode());
        if (n >= l.model.order()) throw_invalid("scree mode out of range");
        const ModeLedger& led = l.model.ledger[n];
        if (!led.decomposed) throw_invalid("scree mode " + std::to_string(n) + " was not decomposed");
        layers.push_back({l.name, n, led.singular_values, led.ratios});
    }
    return aggregate_scree(std::move(layers));
}

const LayerCoefficients* CoefficientSet::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.layer == name) return &l;
    return nullptr;
}

std::size_t CoefficientSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.coefficients.values.size();
    return n;
}

CoefficientSet project_model(const UniversalSubspace& u, const ModelWeights& w) {
    CoefficientSet c;
    c.model_id = w.model_id;
    for (const auto& ls : u.layers) {
        const Layer* layer = w.find(ls.name);
        if (!layer) throw_invalid("project_model: model '" + w.model_id + "' is missing layer '" + ls.name + "'");
        if (static_cast<std::size_t>(layer->values.rows()) != ls.rows ||
            static_cast<std::size_t>(layer->values.cols()) != ls.cols) {
            throw_invalid("project_model: layer '" + ls.name + "' has the wrong shape");
        }
        SliceCoefficients coeffs = project_slice(ls.model, layer_slice(layer->values, u.config.layout));
        coeffs.id = ls.name;
        c.layers.push_back({ls.name, std::move(coeffs)});
    }
    for (const auto& name : u.excluded_layers) {
        if (const Layer* layer = w.find(name)) c.passthrough.push_back(*layer);
    }
    return c;
}

ModelWeights reconstruct_model(const UniversalSubspace& u, const CoefficientSet& c) {
    ModelWeights w;
    w.model_id = c.model_id;
    for (const auto& ls : u.layers) {
        const LayerCoefficients* lc = c.find(ls.name);
        if (!lc) throw_invalid("reconstruct_model: coefficients for layer '" + ls.name + "' are missing");
        const DenseTensor slice = reconstruct_slice(ls.model, lc->coefficients);
        w.layers.push_back({ls.name, slice_to_matrix(slice, ls.rows, ls.cols, u.config.layout), ls.dtype});
    }
    for (const auto& p : c.passthrough) w.layers.push_back(p);
    return w;
}

Container coefficients_to_container(const CoefficientSet& c) {
    Container out;
    out.model_id = c.model_id;
    for (const auto& l : c.layers) {
        out.layers.push_back({l.layer, unfold(l.coefficients.values, kModelMode), Dtype::f64});
    }
    for (const auto& p : c.passthrough) out.layers.push_back({"raw/" + p.name, p.values, p.dtype});
    return out;
}

CoefficientSet coefficients_from_container(const UniversalSubspace& u, const Container& c) {
    CoefficientSet out;
    out.model_id = c.model_id;
    for (const auto& layer : c.layers) {
        if (layer.name.rfind("raw/", 0) == 0) {
            out.passthrough.push_back({layer.name.substr(4), layer.values, layer.dtype});
            continue;
        }
        const LayerSubspace* ls = u.find(layer.name);
        if (!ls) throw_invalid("coefficient layer '" + layer.name + "' is not part of the subspace");
        const Shape shape = coefficient_shape(ls->model, static_cast<std::size_t>(layer.values.rows()));
        if (static_cast<std::size_t>(layer.values.size()) != shape_size(shape)) {
            throw_invalid("coefficient layer '" + layer.name + "' does not match the subspace factors");
        }
        out.layers.push_back({layer.name, {layer.name, fold(layer.values, kModelMode, shape)}});
    }
    return out;
}

MergeResult merge_models(const UniversalSubspace& u, std::span<const ModelWeights> models,
                         std::optional<std::vector<double>> weights, const std::string& merged_id) {
    if (models.size() < 2) throw_invalid("merge_models: at least two models are required");
    std::vector<double> w = weights.value_or(std::vector<double>(models.size(), 1.0 / static_cast<double>(models.size())));
    if (w.size() != models.size()) {
        throw_invalid("merge_models: " + std::to_string(w.size()) + " weights given for " +
                      std::to_string(models.size()) + " models");
    }
    double sum = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw_invalid("merge_models: weights must be finite and nonnegative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw_invalid("merge_models: weights must sum to 1");

    MergeResult result;
    result.report.weights = w;
    for (const auto& m : models) result.report.model_ids.push_back(m.model_id);
    result.merged.model_id = merged_id;

    std::vector<CoefficientSet> coeffs;
    coeffs.reserve(models.size());
    for (const auto& m : models) coeffs.push_back(project_model(u, m));

    CoefficientSet merged;
    merged.model_id = merged_id;
    for (const auto& ls : u.layers) {
        DenseTensor acc;
        for (std::size_t i = 0; i < models.size(); ++i) {
            const DenseTensor& v = coeffs[i].find(ls.name)->coefficients.values;
            acc = i == 0 ? w[i] * v : acc + w[i] * v;
        }
        merged.layers.push_back({ls.name, {ls.name, std::move(acc)}});
    }
    result.merged = reconstruct_model(u, merged);

    for (const auto& name : u.excluded_layers) {
        const Layer* first = models.front().find(name);
        bool compatible = first != nullptr;
        for (const auto& m : models) {
            const Layer* l = m.find(name);
            compatible = compatible && l && l->values.rows() == first->values.rows() &&
                         l->values.cols() == first->values.cols();
        }
        if (!compatible) {
            result.report.omitted_layers.push_back(name);
            continue;
        }
        Matrix avg = Matrix::Zero(first->values.rows(), first->values.cols());
        for (std::size_t i = 0; i < models.size(); ++i) avg += w[i] * models[i].layer(name).values;
        result.merged.layers.push_back({name, avg, first->dtype});
        result.report.averaged_excluded_layers.push_back(name);
    }
    return result;
}

double memory_savings(const MemoryAccounting& a) {
    if (a.models == 0 || a.per_model_params == 0) throw_invalid("memory_savings: model count and per-model parameters must be positive");
    const double denominator = static_cast<double>(a.basis_params) + static_cast<double>(a.mean_params) +
                               static_cast<double>(a.models) * static_cast<double>(a.coeff_params_per_model);
    if (denominator == 0.0) throw_invalid("memory_savings: the subspace representation has zero parameters");
    return static_cast<double>(a.models) * static_cast<double>(a.per_model_params) / denominator;
}

std::vector<MemoryPreset> memory_presets() {
    constexpr std::uint64_t lora_pair = 2 * 16 * 4096;  // A (16 x 4096) + B (4096 x 16)
    // ViT-B/16 block weights: qkv 768x2304, proj 768x768, fc1 768x3072, fc2 3072x768, 12 blocks.
    constexpr std::uint64_t vit_block = 768 * 2304 + 768 * 768 + 768 * 3072 + 3072 * 768;
    constexpr std::uint64_t vit = 12 * vit_block;
    return {
        {"arithmetic-example",
         "500 models, 131072 params each, 262144 basis params, 512 coefficients per model, no mean",
         {500, 131072, 262144, 512, 0}},
        {"mistral-lora-19x",
         "500 rank-16 LoRA pairs at d=4096 (131072 params each); each pair flattened to one vector, "
         "k=25 shared directions (25 x 131072 basis) plus the mean, 25 coefficients per model",
         {500, lora_pair, 25 * lora_pair, 25, lora_pair}},
        {"vit-100x",
         "500 ViT-B/16 models, block weights only (first/last layers excluded, 84934656 params); "
         "each of the 48 matrices flattened, k=4 shared directions per matrix (4 x 84934656 basis), "
         "no mean, 4 coefficients x 48 matrices per model",
         {500, vit, 4 * vit, 4 * 48, 0}},
    };
}

std::uint64_t coefficient_parameter_count(std::uint64_t k, std::uint64_t matrices) {
    return k * matrices;
}

AdaptResult adapt_coefficients(const UniversalSubspace& u, const std::string& layer, const Matrix& x,
                               const Matrix& y, const AdaptOptions& options) {
    const LayerSubspace& ls = u.layer(layer);
    const auto rows = static_cast<Eigen::Index>(ls.rows);
    const auto cols = static_cast<Eigen::Index>(ls.cols);
    if (x.rows() < 1) throw_invalid("adapt: at least one sample is required");
    if (x.cols() != cols) throw_invalid("adapt: X must have " + std::to_string(cols) + " columns (layer inputs)");
    if (y.cols() != rows) throw_invalid("adapt: Y must have " + std::to_string(rows) + " columns (layer outputs)");
    if (y.rows() != x.rows()) throw_invalid("adapt: X and Y must have the same number of rows");
    if (!x.allFinite() || !y.allFinite()) throw_invalid("adapt: X and Y must be finite");

    const Shape cshape = coefficient_shape(ls.model, slice_rows(u.config.layout, ls.rows));
    const std::size_t p = shape_size(cshape);

    // Mean layer and the layer directions spanned by each unit coefficient.
    const auto expand = [&](const DenseTensor& c) {
        return slice_to_matrix(reconstruct_slice(ls.model, {layer, c}), ls.rows, ls.cols, u.config.layout);
    };
    const Matrix mean = expand(DenseTensor(cshape));
    const Matrix target = flat_column(y - layer_basis_product(x, mean));
    Matrix design(target.rows(), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) {
        DenseTensor unit(cshape);
        unit[j] = 1.0;
        design.col(static_cast<Eigen::Index>(j)) = flat_column(layer_basis_product(x, expand(unit) - mean));
    }

    Matrix normal = design.transpose() * design;
    const Vector rhs = design.transpose() * target;
    const double target_sq = target.squaredNorm();

    FitReport report;
    report.layer = layer;
    report.trainable_params = p;
    report.samples = static_cast<std::size_t>(x.rows());
    report.ridge = options.ridge;
    if (options.ridge < 0.0) throw_invalid("adapt: ridge must be >= 0");
    normal.diagonal().array() += options.ridge;

    const SymmetricEigen eig = symmetric_eigen(normal);
    const double lmax = eig.values(0);
    const double lmin = eig.values(eig.values.size() - 1);
    if (!(lmax > 0.0) || lmin <= 1e-12 * lmax) {
        const double suggested = 1e-8 * normal.trace() / static_cast<double>(p);
        throw RankDeficiencyError("adapt: normal equations for layer '" + layer +
                                      "' are singular; retry with ridge >= " + std::to_string(suggested),
                                  suggested > 0.0 ? suggested : 1e-8);
    }
    report.lipschitz = operator_norm(normal);

    const auto loss = [&](const Vector& c) {
        double l = (design * c - target).squaredNorm();
        if (options.ridge > 0.0) l += options.ridge * c.squaredNorm();
        return l;
    };

    Vector c;
    if (options.method == AdaptMethod::closed_form) {
        report.method = "closed_form";
        c = normal.ldlt().solve(rhs);
        report.loss_history.push_back(loss(c));
        report.epochs_run = 0;
    } else {
        report.method = "gradient";
        const double lr = options.learning_rate.value_or(0.5 / report.lipschitz);
        if (!(lr > 0.0)) throw_invalid("adapt: learning rate must be > 0");
        report.learning_rate = lr;
        c = Vector::Zero(static_cast<Eigen::Index>(p));
        const double stop = 1e-13 * (rhs.norm() + 1.0);
        for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
            const Vector grad = 2.0 * (normal * c - rhs);
            c -= lr * grad;
            report.loss_history.push_back(loss(c));
            report.epochs_run = epoch + 1;
            if (!c.allFinite()) throw Error(ErrorKind::numerical_failure, "adapt: gradient descent diverged");
            if (grad.norm() <= stop) break;
        }
    }
    report.final_loss = report.loss_history.back();
    report.relative_residual = target_sq > 0.0 ? std::sqrt(report.final_loss / target_sq) : std::sqrt(report.final_loss);

    DenseTensor coeffs(cshape);
    for (std::size_t j = 0; j < p; ++j) coeffs[j] = c(static_cast<Eigen::Index>(j));
    return {{layer, std::move(coeffs)}, std::move(report)};
}

Matrix planted_basis(const PlantedEnsembleConfig& cfg, std::size_t layer) {
    if (cfg.rank < 1 || cfg.rank > cfg.cols) throw_invalid("planted ensemble: rank must lie in [1, cols]");
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(layer), 0u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Matrix g(static_cast<Eigen::Index>(cfg.cols), static_cast<Eigen::Index>(cfg.rank));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
}

std::vector<ModelWeights> planted_ensemble(const PlantedEnsembleConfig& cfg) {
    if (cfg.models < 1 || cfg.layers < 1 || cfg.rows < 1) throw_invalid("planted ensemble: sizes must be >= 1");
    if (!(cfg.noise >= 0.0)) throw_invalid("planted ensemble: noise must be >= 0");
    std::vector<Matrix> bases;
    for (std::size_t l = 0; l < cfg.layers; ++l) bases.push_back(planted_basis(cfg, l));

    const auto rows = static_cast<Eigen::Index>(cfg.rows);
    const auto cols = static_cast<Eigen::Index>(cfg.cols);
    const auto rank = static_cast<Eigen::Index>(cfg.rank);
    std::vector<ModelWeights> out;
    for (std::size_t t = cfg.first_model; t < cfg.first_model + cfg.models; ++t) {
        ModelWeights w;
        char id[32];
        std::snprintf(id, sizeof id, "%03zu", t);
        w.model_id = cfg.prefix + "_" + id;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                              static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(t + 1)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> normal;
            Matrix c(rows, rank);
            for (Eigen::Index j = 0; j < rank; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) c(i, j) = normal(rng);
            Matrix values = c * bases[l].transpose();
            Matrix n(rows, cols);
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) n(i, j) = normal(rng);
            if (cfg.noise > 0.0 && n.norm() > 0.0) values += cfg.noise * values.norm() / n.norm() * n;
            if (cfg.dtype == Dtype::f32) values = values.cast<float>().cast<double>();
            w.layers.push_back({"layer" + std::to_string(l), std::move(values), cfg.dtype});
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace uws
