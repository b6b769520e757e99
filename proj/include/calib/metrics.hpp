#pragma once

#include "calib/dataset.hpp"
#include "calib/prompts.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace calib {

// One calibrated sample: a question group's accuracy fraction and its
// elicited confidence fraction.
struct GroupOutcome {
    double accuracy = 0.0;    // correct count / group size
    double confidence = 0.0;  // in [0,1]
    std::string method;
    std::string persona;
    Subtask subtask;
    int group_index = 0;
    int size = 0;
};

struct CalibrationBins {
    int m = 10;
    std::vector<int> counts;            // per-bin outcome counts, sum = n
    std::vector<double> mean_accuracy;  // 0 for empty bins
    std::vector<double> mean_confidence;
};

// Equal-width bins over [0,1] by confidence, [l,u) except the last bin which
// is right-closed.
CalibrationBins compute_calibration_bins(std::span<const GroupOutcome> outcomes, int m = 10);

// Expected calibration error: sum over bins of (n_b/n)*|acc_b - conf_b|.
// Throws std::invalid_argument on empty input.
double ece(std::span<const GroupOutcome> outcomes, int m = 10);

struct SubtaskReport {
    Subtask subtask;
    std::string method;
    Persona persona;
    double accuracy = 0.0;        // mean over groups that produced answers
    double avg_confidence = 0.0;  // mean over groups with parsed confidence
    double ece = 0.0;
    int n_groups = 0;  // groups contributing to calibration
    int n_failed = 0;  // groups excluded for missing confidence
};

// (Conf_other - Acc_other) - (Conf_self - Acc_self); positive means
// overplacement toward the persona. Throws on subtask/method mismatch.
double overplacement_score(const SubtaskReport& self_report, const SubtaskReport& other_report);

// Confidence minus accuracy; negative means underconfidence.
double delta_demographic(const SubtaskReport& report);

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    int n_points = 0;
};

// Ordinary least squares of confidence on accuracy over (accuracy,
// confidence) points. Ideal calibration is slope 1, intercept 0. Throws when
// fewer than two distinct accuracy values are present.
RegressionFit calibration_fit(std::span<const std::pair<double, double>> points);

// Unweighted mean of per-subtask ECE (the AvE summary column).
double average_ece(std::span<const SubtaskReport> reports);

} // namespace calib
