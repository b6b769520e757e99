#pragma once

#include "calib/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace calib {

// Fraction -> percent with one decimal, half-up ("0.6" -> "60.0"), matching
// the table style used throughout the reports.
std::string format_percent(double fraction);

// Subtask table: CSV and JSON with identical numbers. Rows ordered by
// (difficulty, subject, method, persona); AvE summary row per
// (method, persona). JSON rows carry the raw full-precision values.
void emit_subtask_table(const std::vector<SubtaskReport>& reports,
                        const std::string& csv_path, const std::string& json_path);

struct MethodSeries {
    std::string label;                                // method name
    std::vector<std::pair<double, double>> points;    // per-subtask (accuracy, confidence)
    std::optional<RegressionFit> fit;                 // absent when degenerate
    std::string warning;                              // set when the fit is degenerate
};

// Per-method scatter series over per-subtask means, persona "self" only.
std::vector<MethodSeries> calibration_series(const std::vector<SubtaskReport>& reports);

// Self-contained SVG: scatter points, one OLS line per fit, the identity
// diagonal, axes [0,1]x[0,1] labeled accuracy/confidence.
void emit_calibration_plot(const std::vector<MethodSeries>& series, const std::string& svg_path);

// Overplacement per (role, subtask) and demographic confidence-accuracy gaps
// per (attribute, value), with the underlying pairs for auditability.
void emit_persona_report(const std::vector<SubtaskReport>& self_reports,
                         const std::vector<SubtaskReport>& other_reports,
                         const std::vector<SubtaskReport>& demographic_reports,
                         const std::string& json_path);

} // namespace calib
