// SPDX-License-Identifier: Apache-2.0
#include "uws/cli.hpp"

#include "uws/ensemble.hpp"
#include "uws/error.hpp"
#include "uws/reports.hpp"
#include "uws/theory.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <glob.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

namespace uws::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join(const std::vector<std::string>& items, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
}

template <class T>
std::string join_numbers(const std::vector<T>& items) {
    std::vector<std::string> parts;
    for (const auto& v : items) {
        if constexpr (std::is_floating_point_v<T>) parts.push_back(format_number(v));
        else parts.push_back(std::to_string(v));
    }
    return join(parts);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

// Each pattern is glob-expanded; a pattern without matches that names an
// existing file is used verbatim. Matches are sorted and deduplicated.
std::vector<fs::path> expand_models(const std::vector<std::string>& patterns) {
    std::vector<std::string> found;
    for (const auto& pattern : patterns) {
        for (const auto& piece : split(pattern, ',')) {
            glob_t g{};
            const int rc = ::glob(piece.c_str(), 0, nullptr, &g);
            if (rc == 0) {
                for (std::size_t i = 0; i < g.gl_pathc; ++i) found.emplace_back(g.gl_pathv[i]);
            } else if (fs::exists(piece)) {
                found.push_back(piece);
            }
            ::globfree(&g);
            if (rc != 0 && !fs::exists(piece)) throw Error(ErrorKind::io, "no model files match '" + piece + "'");
        }
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    return {found.begin(), found.end()};
}

std::vector<ModelWeights> load_models(const std::vector<fs::path>& paths) {
    std::vector<ModelWeights> models;
    models.reserve(paths.size());
    for (const auto& p : paths) {
        try {
            models.push_back(load_weights(p));
        } catch (const ParseError& e) {
            throw ParseError(e.code(), e.offset(), p.string() + ": " + e.detail());
        }
    }
    return models;
}

void write_report(const std::string& path, const std::string& text) {
    if (!path.empty()) write_text_atomic(path, text);
}

Matrix read_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    bool first_data = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        bool numeric = true;
        for (const auto& cell : split(line, ',')) {
            std::size_t used = 0;
            try {
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
            if (cell.find_first_not_of(" \t", used) != std::string::npos) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (first_data) {  // column header
                first_data = false;
                continue;
            }
            throw Error(ErrorKind::invalid_argument, path.string() + ":" + std::to_string(line_no) + ": not a number");
        }
        first_data = false;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(ErrorKind::invalid_argument,
                        path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " columns");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::invalid_argument, path.string() + ": no data rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

// ---- extract / scree ----

struct ExtractArgs {
    std::vector<std::string> models;
    std::string out;
    std::string report;
    std::string format = "csv";
    std::optional<double> tau;
    std::optional<double> eigen_floor;
    std::optional<std::size_t> fixed_k;
    bool hard_threshold = false;
    std::optional<double> noise_sigma;
    int order = 2;
    std::string stacking;
    std::optional<std::string> exclude;
    std::string center = "feature";
    bool keep_model_mode = false;
    std::string arch = "uws";
    std::size_t top_n = 100;
};

RankPolicy policy_of(const ExtractArgs& a) {
    if (a.fixed_k) return RankPolicy::fixed_k(*a.fixed_k);
    if (a.eigen_floor) return RankPolicy::eigen_floor(*a.eigen_floor);
    if (a.hard_threshold) return RankPolicy::hard_threshold(a.noise_sigma);
    return RankPolicy::cumulative_variance(a.tau.value_or(0.95));
}

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
    const auto format = parse_report_format(a.format);
    ExtractionConfig cfg;
    cfg.architecture_id = a.arch;
    cfg.policy = policy_of(a);
    cfg.centering = parse_centering(a.center);
    cfg.decompose_stacking_mode = !a.keep_model_mode;
    cfg.layout = a.stacking.empty() ? parse_stacking(std::to_string(a.order)) : parse_stacking(a.stacking);
    if (a.exclude) {
        const std::string& e = *a.exclude;
        cfg.excluded_layers = (e.empty() || e == "none") ? std::vector<std::string>{} : split(e, ',');
    }

    const auto paths = expand_models(a.models);
    const auto models = load_models(paths);
    UniversalSubspace u = extract_universal(models, cfg);
    save_subspace(u, a.out);

    const ReportHeader header{{"command", "extract"},
                              {"architecture_id", cfg.architecture_id},
                              {"models", std::to_string(models.size())},
                              {"policy", cfg.policy.describe()},
                              {"stacking", to_string(cfg.layout)},
                              {"centering", to_string(cfg.centering)},
                              {"decompose_stacking_mode", cfg.decompose_stacking_mode ? "true" : "false"},
                              {"excluded_layers", join(u.excluded_layers)},
                              {"mode", std::to_string(u.feature_mode())}};
    const ScreeReport scree = scree_report(u);
    if (!a.report.empty()) {
        write_report(a.report, format == ReportFormat::csv ? scree_csv(scree, header) : scree_json(scree, header));
    }
    out << fmt::format("extracted {} layers from {} models into {}\n", u.layers.size(), models.size(), a.out);
    for (const auto& l : u.layers) {
        std::vector<std::size_t> ranks;
        for (std::size_t m = 0; m < l.model.shape.size(); ++m) ranks.push_back(l.model.rank(m));
        out << fmt::format("  {}: {}x{} ranks {}\n", l.name, l.rows, l.cols, join_numbers(ranks));
    }
    out << scree_display(scree, a.top_n);
    return 0;
}

struct ScreeArgs {
    std::string subspace;
    std::string out;
    std::string format = "csv";
    std::optional<std::size_t> mode;
    std::size_t top_n = 100;
};

int cmd_scree(const ScreeArgs& a, std::ostream& out) {
    const auto format = parse_report_format(a.format);
    const UniversalSubspace u = load_subspace(a.subspace);
    const ScreeReport scree = scree_report(u, a.mode);
    const ReportHeader header{{"command", "scree"},
                              {"subspace", a.subspace},
                              {"architecture_id", u.architecture_id},
                              {"policy", u.config.policy.describe()},
                              {"mode", std::to_string(a.mode.value_or(u.feature_mode()))},
                              {"top_n", std::to_string(a.top_n)}};
    write_report(a.out, format == ReportFormat::csv ? scree_csv(scree, header) : scree_json(scree, header));
    out << scree_display(scree, a.top_n);
    return 0;
}

// ---- project / reconstruct / merge ----

int cmd_project(const std::string& subspace, const std::string& model, const std::string& path, std::ostream& out) {
    const UniversalSubspace u = load_subspace(subspace);
    const CoefficientSet c = project_model(u, load_weights(model));
    write_container(path, coefficients_to_container(c));
    out << fmt::format("projected {} onto {} layers: {} coefficients\n", c.model_id, c.layers.size(),
                       c.parameter_count());
    return 0;
}

int cmd_reconstruct(const std::string& subspace, const std::string& coeffs, const std::string& path,
                    std::ostream& out) {
    const UniversalSubspace u = load_subspace(subspace);
    const CoefficientSet c = coefficients_from_container(u, read_container(coeffs));
    const ModelWeights w = reconstruct_model(u, c);
    save_weights(w, path);
    out << fmt::format("reconstructed {} with {} layers\n", w.model_id, w.layers.size());
    return 0;
}

struct MergeArgs {
    std::string subspace;
    std::vector<std::string> models;
    std::string weights;
    std::string out;
    std::string report;
    std::string id = "merged";
};

int cmd_merge(const MergeArgs& a, std::ostream& out) {
    const UniversalSubspace u = load_subspace(a.subspace);
    const auto paths = expand_models(a.models);
    const auto models = load_models(paths);
    std::optional<std::vector<double>> weights;
    if (!a.weights.empty()) {
        weights.emplace();
        for (const auto& w : split(a.weights, ',')) {
            try {
                weights->push_back(std::stod(w));
            } catch (const std::exception&) {
                throw UsageError("--weights: '" + w + "' is not a number");
            }
        }
    }
    const MergeResult r = merge_models(u, models, weights, a.id);
    save_weights(r.merged, a.out);
    const ReportHeader header{{"command", "merge"}, {"subspace", a.subspace}, {"models", std::to_string(models.size())}};
    write_report(a.report, merge_json(r.report, header));
    out << fmt::format("merged {} models ({}) into {}\n", models.size(), r.report.method, a.out);
    if (!r.report.omitted_layers.empty()) out << "omitted layers: " << join(r.report.omitted_layers) << "\n";
    return 0;
}

// ---- adapt ----

struct AdaptArgs {
    std::string subspace;
    std::string layer;
    std::string x;
    std::string y;
    std::string method = "closed-form";
    std::optional<double> lr;
    std::size_t epochs = 2000;
    double ridge = 0.0;
    std::string out;
    std::string report;
    std::string format = "csv";
};

int cmd_adapt(const AdaptArgs& a, std::ostream& out) {
    const auto format = parse_report_format(a.format);
    AdaptOptions opts;
    if (a.method == "closed-form") opts.method = AdaptMethod::closed_form;
    else if (a.method == "gd") opts.method = AdaptMethod::gradient;
    else throw UsageError("--method: expected closed-form|gd, got '" + a.method + "'");
    opts.learning_rate = a.lr;
    opts.epochs = a.epochs;
    opts.ridge = a.ridge;

    const UniversalSubspace u = load_subspace(a.subspace);
    const AdaptResult r = adapt_coefficients(u, a.layer, read_csv_matrix(a.x), read_csv_matrix(a.y), opts);

    CoefficientSet c;
    c.model_id = "adapted";
    c.layers.push_back({a.layer, r.coefficients});
    write_container(a.out, coefficients_to_container(c));

    const ReportHeader header{{"command", "adapt"},   {"subspace", a.subspace},
                              {"layer", a.layer},     {"x", a.x},
                              {"y", a.y},             {"method", a.method},
                              {"epochs", std::to_string(a.epochs)}};
    write_report(a.report, format == ReportFormat::csv ? fit_csv(r.report, header) : fit_json(r.report, header));
    out << fmt::format("fit {} ({}): {} trainable params, final loss {:.6g}, relative residual {:.3g}\n", a.layer,
                       r.report.method, r.report.trainable_params, r.report.final_loss, r.report.relative_residual);
    return 0;
}

// ---- memcalc ----

struct MemArgs {
    std::optional<std::uint64_t> t;
    std::optional<std::uint64_t> per_model;
    std::optional<std::uint64_t> basis;
    std::optional<std::uint64_t> coeffs;
    std::uint64_t mean = 0;
    bool presets = false;
    std::uint64_t adapt_k = 16;
    std::uint64_t adapt_matrices = 600;
    std::uint64_t full_params = 86'000'000;
    std::string format = "csv";
    std::string out;
};

int cmd_memcalc(const MemArgs& a, std::ostream& out) {
    const auto format = parse_report_format(a.format);
    std::vector<MemoryPreset> rows;
    if (a.presets) rows = memory_presets();
    if (a.t || a.per_model || a.basis || a.coeffs) {
        if (!(a.t && a.per_model && a.basis && a.coeffs)) {
            throw UsageError("memcalc needs all of --t, --per-model, --basis and --coeffs");
        }
        rows.push_back({"custom", "command-line parameters", {*a.t, *a.per_model, *a.basis, *a.coeffs, a.mean}});
    }
    if (rows.empty()) throw UsageError("memcalc needs --t/--per-model/--basis/--coeffs or --presets");

    const ReportHeader header{{"command", "memcalc"}, {"presets", a.presets ? "true" : "false"}};
    std::string text = format == ReportFormat::csv ? memory_text(rows, header) : memory_json(rows, header);
    if (a.presets && format == ReportFormat::csv) {
        const std::uint64_t trainable = coefficient_parameter_count(a.adapt_k, a.adapt_matrices);
        text += fmt::format("# adaptation k={} matrices={} trainable_params={} full_params={}\n", a.adapt_k,
                            a.adapt_matrices, trainable, a.full_params);
    }
    if (a.out.empty()) out << text;
    else write_text_atomic(a.out, text);
    return 0;
}

// ---- synth ----

struct SynthArgs {
    std::size_t models = 3;
    std::size_t layers = 3;
    std::size_t rows = 8;
    std::size_t cols = 16;
    std::size_t rank = 4;
    double noise = 1e-3;
    std::uint64_t seed = 0;
    std::size_t first = 0;
    std::string dtype = "f64";
    std::string prefix = "model";
    std::string out_dir;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    PlantedEnsembleConfig cfg;
    cfg.models = a.models;
    cfg.layers = a.layers;
    cfg.rows = a.rows;
    cfg.cols = a.cols;
    cfg.rank = a.rank;
    cfg.noise = a.noise;
    cfg.seed = a.seed;
    cfg.first_model = a.first;
    cfg.prefix = a.prefix;
    if (a.dtype == "f32") cfg.dtype = Dtype::f32;
    else if (a.dtype != "f64") throw UsageError("--dtype: expected f32|f64");
    fs::create_directories(a.out_dir);
    for (const auto& m : planted_ensemble(cfg)) {
        const fs::path p = fs::path(a.out_dir) / (m.model_id + ".uws");
        save_weights(m, p);
        out << p.string() << "\n";
    }
    return 0;
}

// ---- theory ----

struct ConvergeArgs {
    theory::ConvergenceConfig cfg;
    std::vector<double> spectrum;
    std::string perturbation = "isotropic";
    std::string out;
    std::string json_out;
};

int cmd_converge(ConvergeArgs a, std::ostream& out) {
    a.cfg.spectrum = a.spectrum;
    a.cfg.perturbation = theory::parse_perturbation(a.perturbation);
    const auto& c = a.cfg;
    const theory::ConvergenceReport r = theory::convergence_study(c);
    const ReportHeader header{{"command", "theory converge"},
                              {"d", std::to_string(c.dim)},
                              {"k", std::to_string(c.k)},
                              {"spectrum", c.spectrum.empty() ? "ones" : join_numbers(c.spectrum)},
                              {"t_grid", join_numbers(c.t_grid)},
                              {"trials", std::to_string(c.trials)},
                              {"eta", format_number(c.eta)},
                              {"b", format_number(c.bound_b)},
                              {"delta", format_number(c.delta)},
                              {"c1", format_number(c.c1)},
                              {"c2", format_number(c.c2)},
                              {"perturbation", to_string(c.perturbation)},
                              {"seed", std::to_string(c.seed)}};
    write_report(a.out, convergence_csv(r, header));
    write_report(a.json_out, convergence_json(r, header));
    out << convergence_display(r);
    return 0;
}

struct BoundsArgs {
    theory::BoundParameters p;
    std::optional<double> gamma;
    std::string format = "csv";
};

int cmd_bounds(BoundsArgs a, std::ostream& out) {
    const auto format = parse_report_format(a.format);
    a.p.gamma_k = a.gamma;
    const auto b = theory::theorem1_bounds(a.p);
    out << (format == ReportFormat::csv ? bounds_text(a.p, b) : bounds_json(a.p, b));
    return 0;
}

struct DkArgs {
    std::size_t d = 16;
    std::size_t k = 4;
    double perturb = 0.1;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    std::string format = "csv";
};

int cmd_dk(const DkArgs& a, std::ostream& out, std::ostream& err) {
    const auto format = parse_report_format(a.format);
    const auto s = theory::davis_kahan_study(a.d, a.k, a.perturb, a.trials, a.seed);
    const ReportHeader header{{"command", "theory dk-check"}, {"d", std::to_string(a.d)},
                              {"k", std::to_string(a.k)},     {"perturb", format_number(a.perturb)},
                              {"trials", std::to_string(a.trials)}, {"seed", std::to_string(a.seed)}};
    out << (format == ReportFormat::csv ? dk_text(s, header) : dk_json(s, header));
    if (s.violations > 0) {
        err << "error: " << s.violations << " Davis-Kahan violations\n";
        return 3;
    }
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument:
        case ErrorKind::parse:
        case ErrorKind::io:
            return 2;
        case ErrorKind::numerical_failure:
        case ErrorKind::degenerate_spectrum:
        case ErrorKind::rank_deficiency:
        case ErrorKind::internal_consistency:
            return 3;
    }
    return 2;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Universal weight subspaces: extraction, projection, merging, adaptation and theory checks", "uws"};
    app.require_subcommand(1);
    app.fallthrough(false);

    std::function<int()> action;
    const auto bind = [&](CLI::App* sub, std::function<int()> f) {
        sub->callback([&action, f = std::move(f)] { action = f; });
    };

    // extract
    ExtractArgs ex;
    {
        auto* s = app.add_subcommand("extract", "Extract a universal subspace from an ensemble of models");
        s->add_option("--models", ex.models, "Model files or glob patterns")->required()->expected(1, -1);
        s->add_option("--out", ex.out, "Output subspace file")->required();
        s->add_option("--report", ex.report, "Scree report path");
        s->add_option("--format", ex.format, "Report format: csv|json")->capture_default_str();
        auto* tau = s->add_option("--tau", ex.tau, "Cumulative explained variance threshold in (0, 1] (default 0.95)");
        auto* floor = s->add_option("--eigen-floor", ex.eigen_floor, "Keep components with ratio above this floor");
        auto* k = s->add_option("--fixed-k", ex.fixed_k, "Keep exactly K components per mode");
        auto* ht = s->add_flag("--hard-threshold", ex.hard_threshold, "Optimal hard threshold for i.i.d. noise");
        s->add_option("--noise-sigma", ex.noise_sigma, "Known noise level for --hard-threshold")->needs(ht);
        tau->excludes(floor)->excludes(k)->excludes(ht);
        floor->excludes(k)->excludes(ht);
        k->excludes(ht);
        auto* order = s->add_option("--order", ex.order, "Stack order: 2 (rows concatenated) or 3 (model mode)")
                          ->check(CLI::IsMember({2, 3}))
                          ->capture_default_str();
        s->add_option("--stacking", ex.stacking, "Stacking layout: concat_rows|model_mode|flatten")->excludes(order);
        s->add_option("--exclude-layers", ex.exclude, "Comma-separated layers kept out of the subspace ('none' for none)");
        s->add_option("--center", ex.center, "Centering: feature|global")->capture_default_str();
        s->add_flag("--keep-model-mode", ex.keep_model_mode, "Leave the model mode untruncated");
        s->add_option("--arch", ex.arch, "Architecture id recorded in the subspace")->capture_default_str();
        s->add_option("--top-n", ex.top_n, "Components shown per layer on stdout")->capture_default_str();
        bind(s, [&] { return cmd_extract(ex, out); });
    }

    ScreeArgs sc;
    {
        auto* s = app.add_subcommand("scree", "Write the explained-variance spectrum of a subspace");
        s->add_option("--subspace", sc.subspace, "Subspace file")->required();
        s->add_option("--out", sc.out, "Report path");
        s->add_option("--format", sc.format, "Report format: csv|json")->capture_default_str();
        s->add_option("--mode", sc.mode, "Tensor mode (default: feature mode)");
        s->add_option("--top-n", sc.top_n, "Components shown per layer on stdout")->capture_default_str();
        bind(s, [&] { return cmd_scree(sc, out); });
    }

    std::string pr_subspace, pr_model, pr_out;
    {
        auto* s = app.add_subcommand("project", "Project a model onto a subspace");
        s->add_option("--subspace", pr_subspace, "Subspace file")->required();
        s->add_option("--model", pr_model, "Model file")->required();
        s->add_option("--out", pr_out, "Output coefficient file")->required();
        bind(s, [&] { return cmd_project(pr_subspace, pr_model, pr_out, out); });
    }

    std::string rc_subspace, rc_coeffs, rc_out;
    {
        auto* s = app.add_subcommand("reconstruct", "Rebuild model weights from coefficients");
        s->add_option("--subspace", rc_subspace, "Subspace file")->required();
        s->add_option("--coeffs", rc_coeffs, "Coefficient file")->required();
        s->add_option("--out", rc_out, "Output model file")->required();
        bind(s, [&] { return cmd_reconstruct(rc_subspace, rc_coeffs, rc_out, out); });
    }

    MergeArgs mg;
    {
        auto* s = app.add_subcommand("merge", "Merge models by averaging their subspace coefficients");
        s->add_option("--subspace", mg.subspace, "Subspace file")->required();
        s->add_option("--models", mg.models, "Model files or glob patterns")->required()->expected(1, -1);
        s->add_option("--weights", mg.weights, "Comma-separated weights summing to 1 (default uniform)");
        s->add_option("--out", mg.out, "Output model file")->required();
        s->add_option("--report", mg.report, "Merge report path (JSON)");
        s->add_option("--id", mg.id, "Model id of the merged model")->capture_default_str();
        bind(s, [&] { return cmd_merge(mg, out); });
    }

    AdaptArgs ad;
    {
        auto* s = app.add_subcommand("adapt", "Fit the coefficients of one layer to input/output data");
        s->add_option("--subspace", ad.subspace, "Subspace file")->required();
        s->add_option("--layer", ad.layer, "Layer name")->required();
        s->add_option("--x", ad.x, "Inputs, CSV with n rows and cols(layer) columns")->required();
        s->add_option("--y", ad.y, "Targets, CSV with n rows and rows(layer) columns")->required();
        s->add_option("--method", ad.method, "closed-form|gd")->capture_default_str();
        s->add_option("--lr", ad.lr, "Gradient step (default 0.5 / Lipschitz constant)");
        s->add_option("--epochs", ad.epochs, "Gradient epochs")->capture_default_str();
        s->add_option("--ridge", ad.ridge, "Ridge added to the normal matrix")->capture_default_str();
        s->add_option("--out", ad.out, "Output coefficient file")->required();
        s->add_option("--report", ad.report, "Fit report path");
        s->add_option("--format", ad.format, "Report format: csv|json")->capture_default_str();
        bind(s, [&] { return cmd_adapt(ad, out); });
    }

    MemArgs mc;
    {
        auto* s = app.add_subcommand("memcalc", "Storage ratio of separate models against a shared subspace");
        s->add_option("--t", mc.t, "Number of models");
        s->add_option("--per-model", mc.per_model, "Parameters per model");
        s->add_option("--basis", mc.basis, "Shared basis parameters");
        s->add_option("--coeffs", mc.coeffs, "Coefficients per model");
        s->add_option("--mean", mc.mean, "Shared mean parameters")->capture_default_str();
        s->add_flag("--presets", mc.presets, "Include the documented parameterizations");
        s->add_option("--adapt-k", mc.adapt_k, "Coefficients per matrix for the adaptation count")->capture_default_str();
        s->add_option("--adapt-matrices", mc.adapt_matrices, "Matrices for the adaptation count")->capture_default_str();
        s->add_option("--full-params", mc.full_params, "Full fine-tuning parameters for comparison")
            ->capture_default_str();
        s->add_option("--format", mc.format, "csv|json")->capture_default_str();
        s->add_option("--out", mc.out, "Report path (default stdout)");
        bind(s, [&] { return cmd_memcalc(mc, out); });
    }

    SynthArgs sy;
    {
        auto* s = app.add_subcommand("synth", "Write a synthetic ensemble whose layers share a planted subspace");
        s->add_option("--models", sy.models, "Number of models")->capture_default_str();
        s->add_option("--layers", sy.layers, "Layers per model")->capture_default_str();
        s->add_option("--rows", sy.rows, "Rows per layer")->capture_default_str();
        s->add_option("--cols", sy.cols, "Columns per layer")->capture_default_str();
        s->add_option("--rank", sy.rank, "Planted rank")->capture_default_str();
        s->add_option("--noise", sy.noise, "Noise norm relative to the signal")->capture_default_str();
        s->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
        s->add_option("--first", sy.first, "Index of the first model")->capture_default_str();
        s->add_option("--dtype", sy.dtype, "f32|f64")->capture_default_str();
        s->add_option("--prefix", sy.prefix, "Model id prefix")->capture_default_str();
        s->add_option("--out-dir", sy.out_dir, "Output directory")->required();
        bind(s, [&] { return cmd_synth(sy, out); });
    }

    auto* th = app.add_subcommand("theory", "Synthetic checks of the convergence theory");
    th->require_subcommand(1);

    ConvergeArgs cv;
    {
        auto* s = th->add_subcommand("converge", "Operator and subspace error against the number of tasks");
        auto& c = cv.cfg;
        s->add_option("--d", c.dim, "Ambient dimension")->capture_default_str();
        s->add_option("--k", c.k, "Subspace dimension")->capture_default_str();
        s->add_option("--spectrum", cv.spectrum, "Nonincreasing planted spectrum (default k ones)")->delimiter(',');
        s->add_option("--t-grid", c.t_grid, "Comma-separated task counts")->delimiter(',')->capture_default_str();
        s->add_option("--trials", c.trials, "Trials per task count")->capture_default_str();
        s->add_option("--eta", c.eta, "Per-task estimation error")->capture_default_str();
        s->add_option("--perturbation", cv.perturbation, "isotropic|radial")->capture_default_str();
        s->add_option("--b", c.bound_b, "Norm bound B")->capture_default_str();
        s->add_option("--delta", c.delta, "Failure probability")->capture_default_str();
        s->add_option("--c1", c.c1, "Across-task constant")->capture_default_str();
        s->add_option("--c2", c.c2, "Log constant")->capture_default_str();
        s->add_option("--seed", c.seed, "Random seed")->capture_default_str();
        s->add_option("--out", cv.out, "CSV report path");
        s->add_option("--json", cv.json_out, "JSON report path");
        bind(s, [&] { return cmd_converge(cv, out); });
    }

    BoundsArgs bd;
    {
        auto* s = th->add_subcommand("bounds", "Evaluate the operator and subspace error bounds");
        auto& p = bd.p;
        s->add_option("--b", p.bound_b, "Norm bound B")->capture_default_str();
        s->add_option("--delta", p.delta, "Failure probability")->capture_default_str();
        s->add_option("--t", p.tasks, "Number of tasks")->capture_default_str();
        s->add_option("--eta-bar", p.eta_bar, "Mean per-task error")->capture_default_str();
        s->add_option("--eta2-bar", p.eta2_bar, "Mean squared per-task error")->capture_default_str();
        s->add_option("--gamma-k", bd.gamma, "Eigengap (enables the subspace bound)");
        s->add_option("--c1", p.c1, "Across-task constant")->capture_default_str();
        s->add_option("--c2", p.c2, "Log constant")->capture_default_str();
        s->add_option("--format", bd.format, "csv|json")->capture_default_str();
        bind(s, [&] { return cmd_bounds(bd, out); });
    }

    DkArgs dk;
    {
        auto* s = th->add_subcommand("dk-check", "Check the Davis-Kahan inequality on random perturbations");
        s->add_option("--d", dk.d, "Dimension")->capture_default_str();
        s->add_option("--k", dk.k, "Subspace dimension")->capture_default_str();
        s->add_option("--perturb", dk.perturb, "Perturbation operator norm")->capture_default_str();
        s->add_option("--trials", dk.trials, "Number of trials")->capture_default_str();
        s->add_option("--seed", dk.seed, "Random seed")->capture_default_str();
        s->add_option("--format", dk.format, "csv|json")->capture_default_str();
        bind(s, [&] { return cmd_dk(dk, out, err); });
    }

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\nrun 'uws --help' for usage\n";
        return 1;
    }

    try {
        return action ? action() : 1;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        err << "error: parse: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: io: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace uws::cli
