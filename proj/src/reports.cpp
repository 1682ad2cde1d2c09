// SPDX-License-Identifier: Apache-2.0
#include "uws/reports.hpp"

#include "uws/error.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace uws {

namespace {

using json = nlohmann::ordered_json;

std::string header_lines(const ReportHeader& header) {
    std::string out;
    for (const auto& [key, value] : header) out += fmt::format("# {}={}\n", key, value);
    return out;
}

json header_json(const ReportHeader& header) {
    json j = json::object();
    for (const auto& [key, value] : header) j[key] = value;
    return j;
}

// Non-finite values have no JSON form.
json number(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
}

std::string dump(const json& j) {
    return j.dump(2) + "\n";
}

}  // namespace

const char* to_string(ReportFormat f) noexcept {
    return f == ReportFormat::csv ? "csv" : "json";
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv" || text == "text") return ReportFormat::csv;
    if (text == "json") return ReportFormat::json;
    throw_invalid("unknown report format '" + text + "' (expected csv|json)");
}

std::string format_number(double v) {
    return fmt::format("{}", v);
}

std::string scree_csv(const ScreeReport& r, const ReportHeader& header) {
    std::string out = header_lines(header);
    out += "component_index,layer,sigma,ratio,cumulative,mode,ratio_std\n";
    for (const auto& l : r.layers) {
        double cumulative = 0.0;
        for (std::size_t i = 0; i < l.ratios.size(); ++i) {
            cumulative += l.ratios[i];
            out += fmt::format("{},{},{},{},{},{},\n", i + 1, l.layer, format_number(l.singular_values[i]),
                               format_number(l.ratios[i]), format_number(cumulative), l.mode);
        }
    }
    double cumulative = 0.0;
    for (std::size_t i = 0; i < r.mean_ratios.size(); ++i) {
        cumulative += r.mean_ratios[i];
        out += fmt::format("{},*aggregate*,,{},{},,{}\n", i + 1, format_number(r.mean_ratios[i]),
                           format_number(cumulative), format_number(r.std_ratios[i]));
    }
    return out;
}

std::string scree_json(const ScreeReport& r, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["layers"] = json::array();
    for (const auto& l : r.layers) {
        json jl;
        jl["layer"] = l.layer;
        jl["mode"] = l.mode;
        jl["singular_values"] = l.singular_values;
        jl["ratios"] = l.ratios;
        j["layers"].push_back(std::move(jl));
    }
    j["aggregate"] = {{"mean_ratios", r.mean_ratios}, {"std_ratios", r.std_ratios}};
    return dump(j);
}

std::string scree_display(const ScreeReport& r, std::size_t top_n) {
    std::string out;
    for (const auto& l : r.layers) {
        const std::size_t shown = std::min(top_n, l.ratios.size());
        out += fmt::format("{} (mode {}, {} components, showing {})\n", l.layer, l.mode, l.ratios.size(), shown);
        double cumulative = 0.0;
        for (std::size_t i = 0; i < shown; ++i) {
            cumulative += l.ratios[i];
            out += fmt::format("  {:>4}  sigma={:<12.6g} ratio={:<12.6g} cumulative={:.6f}\n", i + 1,
                               l.singular_values[i], l.ratios[i], cumulative);
        }
    }
    const std::size_t shown = std::min(top_n, r.mean_ratios.size());
    out += fmt::format("aggregate over {} layers (showing {})\n", r.layers.size(), shown);
    for (std::size_t i = 0; i < shown; ++i) {
        out += fmt::format("  {:>4}  mean={:<12.6g} std={:.6g}\n", i + 1, r.mean_ratios[i], r.std_ratios[i]);
    }
    return out;
}

std::string fit_csv(const FitReport& r, const ReportHeader& header) {
    std::string out = header_lines(header);
    out += fmt::format("# layer={}\n# method={}\n# trainable_params={}\n# samples={}\n", r.layer, r.method,
                       r.trainable_params, r.samples);
    out += fmt::format("# lipschitz={}\n# learning_rate={}\n# ridge={}\n# epochs_run={}\n", format_number(r.lipschitz),
                       format_number(r.learning_rate), format_number(r.ridge), r.epochs_run);
    out += fmt::format("# final_loss={}\n# relative_residual={}\n", format_number(r.final_loss),
                       format_number(r.relative_residual));
    out += "epoch,loss\n";
    for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
        out += fmt::format("{},{}\n", i, format_number(r.loss_history[i]));
    }
    return out;
}

std::string fit_json(const FitReport& r, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["layer"] = r.layer;
    j["method"] = r.method;
    j["trainable_params"] = r.trainable_params;
    j["samples"] = r.samples;
    j["lipschitz"] = number(r.lipschitz);
    j["learning_rate"] = number(r.learning_rate);
    j["ridge"] = number(r.ridge);
    j["epochs_run"] = r.epochs_run;
    j["final_loss"] = number(r.final_loss);
    j["relative_residual"] = number(r.relative_residual);
    j["loss_history"] = r.loss_history;
    return dump(j);
}

std::string merge_json(const MergeReport& r, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["method"] = r.method;
    j["model_ids"] = r.model_ids;
    j["weights"] = r.weights;
    j["averaged_excluded_layers"] = r.averaged_excluded_layers;
    j["omitted_layers"] = r.omitted_layers;
    return dump(j);
}

std::string memory_text(const std::vector<MemoryPreset>& rows, const ReportHeader& header) {
    std::string out = header_lines(header);
    out += "name,models,per_model_params,basis_params,coeff_params_per_model,mean_params,separate_params,shared_params,ratio\n";
    for (const auto& p : rows) {
        const auto& a = p.accounting;
        const std::uint64_t separate = a.models * a.per_model_params;
        const std::uint64_t shared = a.basis_params + a.mean_params + a.models * a.coeff_params_per_model;
        out += fmt::format("{},{},{},{},{},{},{},{},{:.4f}\n", p.name, a.models, a.per_model_params, a.basis_params,
                           a.coeff_params_per_model, a.mean_params, separate, shared, memory_savings(a));
    }
    return out;
}

std::string memory_json(const std::vector<MemoryPreset>& rows, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["rows"] = json::array();
    for (const auto& p : rows) {
        const auto& a = p.accounting;
        j["rows"].push_back({{"name", p.name},
                             {"description", p.description},
                             {"models", a.models},
                             {"per_model_params", a.per_model_params},
                             {"basis_params", a.basis_params},
                             {"coeff_params_per_model", a.coeff_params_per_model},
                             {"mean_params", a.mean_params},
                             {"ratio", memory_savings(a)}});
    }
    return dump(j);
}

std::string convergence_csv(const theory::ConvergenceReport& r, const ReportHeader& header) {
    std::string out = header_lines(header);
    out += fmt::format("# gamma_k={}\n# noise_floor={}\n", format_number(r.gamma_k), format_number(r.noise_floor));
    out += r.slope ? fmt::format("# slope={}\n", format_number(*r.slope)) : std::string("# slope=undefined\n");
    out += "T,trial,op_error,subspace_error,op_bound,subspace_bound\n";
    for (const auto& row : r.rows) {
        out += fmt::format("{},{},{},{},{},{}\n", row.tasks, row.trial, format_number(row.op_error),
                           format_number(row.subspace_error), format_number(row.op_bound),
                           format_number(row.subspace_bound));
    }
    return out;
}

std::string convergence_json(const theory::ConvergenceReport& r, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["population_eigenvalues"] = std::vector<double>(r.population_eigenvalues.begin(), r.population_eigenvalues.end());
    j["gamma_k"] = number(r.gamma_k);
    j["noise_floor"] = number(r.noise_floor);
    j["slope_defined"] = r.slope.has_value();
    j["slope"] = r.slope ? json(*r.slope) : json(nullptr);
    j["summary"] = json::array();
    for (const auto& s : r.summary) {
        j["summary"].push_back({{"T", s.tasks},
                                {"mean_op_error", number(s.mean_op_error)},
                                {"mean_true_op_error", number(s.mean_true_op_error)},
                                {"mean_subspace_error", number(s.mean_subspace_error)},
                                {"op_bound", number(s.op_bound)},
                                {"subspace_bound", number(s.subspace_bound)}});
    }
    j["rows"] = json::array();
    for (const auto& row : r.rows) {
        j["rows"].push_back({{"T", row.tasks},
                             {"trial", row.trial},
                             {"op_error", number(row.op_error)},
                             {"subspace_error", number(row.subspace_error)},
                             {"true_op_error", number(row.true_op_error)},
                             {"op_bound", number(row.op_bound)},
                             {"subspace_bound", number(row.subspace_bound)}});
    }
    return dump(j);
}

std::string convergence_display(const theory::ConvergenceReport& r) {
    std::string out = fmt::format("gamma_k={:.6g} noise_floor={:.6g}\n", r.gamma_k, r.noise_floor);
    out += fmt::format("{:>6} {:>14} {:>14} {:>14} {:>14}\n", "T", "op_error", "subspace_err", "op_bound",
                       "subspace_bound");
    for (const auto& s : r.summary) {
        out += fmt::format("{:>6} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g}\n", s.tasks, s.mean_op_error,
                           s.mean_subspace_error, s.op_bound, s.subspace_bound);
    }
    out += r.slope ? fmt::format("log-log slope {:.4f}\n", *r.slope) : std::string("log-log slope undefined\n");
    return out;
}

std::string bounds_text(const theory::BoundParameters& p, const theory::Theorem1Bounds& b) {
    std::string out = fmt::format("# b={}\n# delta={}\n# t={}\n# eta_bar={}\n# eta2_bar={}\n# c1={}\n# c2={}\n",
                                  format_number(p.bound_b), format_number(p.delta), p.tasks, format_number(p.eta_bar),
                                  format_number(p.eta2_bar), format_number(p.c1), format_number(p.c2));
    if (p.gamma_k) out += fmt::format("# gamma_k={}\n", format_number(*p.gamma_k));
    out += fmt::format("across_term={:.5f}\nwithin_term={:.5f}\nop_bound={:.5f}\n", b.across_term, b.within_term,
                       b.op_bound);
    if (b.subspace_bound) out += fmt::format("subspace_bound={:.5f}\n", *b.subspace_bound);
    return out;
}

std::string bounds_json(const theory::BoundParameters& p, const theory::Theorem1Bounds& b) {
    json j;
    j["config"] = {{"b", p.bound_b}, {"delta", p.delta}, {"t", p.tasks}, {"eta_bar", p.eta_bar},
                   {"eta2_bar", p.eta2_bar}, {"c1", p.c1}, {"c2", p.c2}};
    if (p.gamma_k) j["config"]["gamma_k"] = *p.gamma_k;
    j["across_term"] = b.across_term;
    j["within_term"] = b.within_term;
    j["op_bound"] = b.op_bound;
    j["subspace_bound"] = b.subspace_bound ? json(*b.subspace_bound) : json(nullptr);
    return dump(j);
}

std::string dk_text(const theory::DavisKahanStudy& s, const ReportHeader& header) {
    return header_lines(header) + fmt::format("trials={}\nviolations={}\nmax_ratio={}\n", s.trials, s.violations,
                                              format_number(s.max_ratio));
}

std::string dk_json(const theory::DavisKahanStudy& s, const ReportHeader& header) {
    json j;
    j["config"] = header_json(header);
    j["trials"] = s.trials;
    j["violations"] = s.violations;
    j["max_ratio"] = s.max_ratio;
    return dump(j);
}

}  // namespace uws
