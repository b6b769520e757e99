#include "calib/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace calib {

CalibrationBins compute_calibration_bins(std::span<const GroupOutcome> outcomes, int m) {
    if (m < 1) throw std::invalid_argument("bin count must be >= 1");
    CalibrationBins bins;
    bins.m = m;
    bins.counts.assign(static_cast<std::size_t>(m), 0);
    std::vector<double> acc_sum(static_cast<std::size_t>(m), 0.0);
    std::vector<double> conf_sum(static_cast<std::size_t>(m), 0.0);

    for (const auto& o : outcomes) {
        if (o.confidence < 0.0 || o.confidence > 1.0) {
            throw std::invalid_argument("confidence outside [0,1]");
        }
        int b = std::min(static_cast<int>(std::floor(o.confidence * m)), m - 1);
        bins.counts[static_cast<std::size_t>(b)] += 1;
        acc_sum[static_cast<std::size_t>(b)] += o.accuracy;
        conf_sum[static_cast<std::size_t>(b)] += o.confidence;
    }

    bins.mean_accuracy.assign(static_cast<std::size_t>(m), 0.0);
    bins.mean_confidence.assign(static_cast<std::size_t>(m), 0.0);
    for (int b = 0; b < m; ++b) {
        auto i = static_cast<std::size_t>(b);
        if (bins.counts[i] > 0) {
            bins.mean_accuracy[i] = acc_sum[i] / bins.counts[i];
            bins.mean_confidence[i] = conf_sum[i] / bins.counts[i];
        }
    }
    return bins;
}

double ece(std::span<const GroupOutcome> outcomes, int m) {
    if (outcomes.empty()) throw std::invalid_argument("ece of an empty outcome set is undefined");
    CalibrationBins bins = compute_calibration_bins(outcomes, m);
    double n = static_cast<double>(outcomes.size());
    double total = 0.0;
    for (int b = 0; b < m; ++b) {
        auto i = static_cast<std::size_t>(b);
        if (bins.counts[i] == 0) continue;
        total += (bins.counts[i] / n) * std::abs(bins.mean_accuracy[i] - bins.mean_confidence[i]);
    }
    return total;
}

double overplacement_score(const SubtaskReport& self_report, const SubtaskReport& other_report) {
    if (!(self_report.subtask == other_report.subtask) ||
        self_report.method != other_report.method) {
        throw std::invalid_argument("overplacement requires matching subtask and method");
    }
    return (other_report.avg_confidence - other_report.accuracy) -
           (self_report.avg_confidence - self_report.accuracy);
}

double delta_demographic(const SubtaskReport& report) {
    return report.avg_confidence - report.accuracy;
}

RegressionFit calibration_fit(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw std::invalid_argument("regression requires at least 2 points");
    double n = static_cast<double>(points.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& [x, y] : points) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= n;
    mean_y /= n;

    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if (sxx == 0.0) throw std::invalid_argument("regression undefined: no variance in accuracy");

    RegressionFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    fit.n_points = static_cast<int>(points.size());
    return fit;
}

double average_ece(std::span<const SubtaskReport> reports) {
    if (reports.empty()) throw std::invalid_argument("average_ece of no reports is undefined");
    double sum = 0.0;
    for (const auto& r : reports) sum += r.ece;
    return sum / static_cast<double>(reports.size());
}

} // namespace calib
