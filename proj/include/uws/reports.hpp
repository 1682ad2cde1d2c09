// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/ensemble.hpp"
#include "uws/theory.hpp"

#include <string>
#include <utility>
#include <vector>

namespace uws {

/// Effective run configuration, written as "# key=value" lines ahead of CSV
/// tables and as a "config" object in JSON reports.
using ReportHeader = std::vector<std::pair<std::string, std::string>>;

enum class ReportFormat { csv, json };

const char* to_string(ReportFormat f) noexcept;
ReportFormat parse_report_format(const std::string& text);

/// Shortest round-trip decimal form.
std::string format_number(double v);

/// component_index,layer,sigma,ratio,cumulative,mode,ratio_std; layer-averaged
/// rows use the layer name "*aggregate*". Every component is written.
std::string scree_csv(const ScreeReport& r, const ReportHeader& header);
std::string scree_json(const ScreeReport& r, const ReportHeader& header);
/// Human-readable table of the first `top_n` components per layer.
std::string scree_display(const ScreeReport& r, std::size_t top_n);

/// Summary header plus an epoch,loss table.
std::string fit_csv(const FitReport& r, const ReportHeader& header);
std::string fit_json(const FitReport& r, const ReportHeader& header);

std::string merge_json(const MergeReport& r, const ReportHeader& header);

std::string memory_text(const std::vector<MemoryPreset>& rows, const ReportHeader& header);
std::string memory_json(const std::vector<MemoryPreset>& rows, const ReportHeader& header);

/// T,trial,op_error,subspace_error,op_bound,subspace_bound
std::string convergence_csv(const theory::ConvergenceReport& r, const ReportHeader& header);
std::string convergence_json(const theory::ConvergenceReport& r, const ReportHeader& header);
std::string convergence_display(const theory::ConvergenceReport& r);

std::string bounds_text(const theory::BoundParameters& p, const theory::Theorem1Bounds& b);
std::string bounds_json(const theory::BoundParameters& p, const theory::Theorem1Bounds& b);

std::string dk_text(const theory::DavisKahanStudy& s, const ReportHeader& header);
std::string dk_json(const theory::DavisKahanStudy& s, const ReportHeader& header);

}  // namespace uws
