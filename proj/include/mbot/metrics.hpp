#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mbot/calibration.hpp"

namespace mbot {

/// Cumulative drift per axis: the running trapezoid integral of the
/// absolute velocity error. Both series start at 0 and never decrease.
struct DriftSeries {
  std::vector<double> x;
  std::vector<double> y;
};

inline DriftSeries cumulative_drift(const TrialLog& log) {
  const std::size_t n = log.times.size();
  if (log.actual_velocities.size() != n || log.desired_velocities.size() != n)
    throw std::invalid_argument("cumulative_drift: velocities and times differ in length");
  DriftSeries d;
  d.x.assign(n, 0.0);
  d.y.assign(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double h = log.times[k] - log.times[k - 1];
    const Vec2 e0 = log.actual_velocities[k - 1] - log.desired_velocities[k - 1];
    const Vec2 e1 = log.actual_velocities[k] - log.desired_velocities[k];
    d.x[k] = d.x[k - 1] + 0.5 * h * (std::abs(e0.x) + std::abs(e1.x));
    d.y[k] = d.y[k - 1] + 0.5 * h * (std::abs(e0.y) + std::abs(e1.y));
  }
  return d;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty series");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct TrialMetrics {
  double final_position_error = 0.0;  // microns
  double median_vx_error = 0.0;       // microns/s, of |v_x - v^d_x|
  double median_vy_error = 0.0;
  double drift_final_x = 0.0;         // microns
  double drift_final_y = 0.0;
  DriftSeries drift;
};

/// Distance between where the run ended and where the desired velocity
/// stream would have taken it from the same start.
inline double final_position_error(const TrialLog& log) {
  const double dt = log.uniform_dt();
  Vec2 gap;
  for (std::size_t k = 0; k < log.size(); ++k) gap += log.actual_velocities[k] - log.desired_velocities[k];
  return (gap * dt).norm();
}

inline TrialMetrics trial_metrics(const TrialLog& log) {
  log.check_consistent();
  TrialMetrics m;
  m.final_position_error = final_position_error(log);
  std::vector<double> ex, ey;
  ex.reserve(log.size());
  ey.reserve(log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    const Vec2 e = log.actual_velocities[k] - log.desired_velocities[k];
    ex.push_back(std::abs(e.x));
    ey.push_back(std::abs(e.y));
  }
  m.median_vx_error = median(std::move(ex));
  m.median_vy_error = median(std::move(ey));
  m.drift = cumulative_drift(log);
  m.drift_final_x = m.drift.x.back();
  m.drift_final_y = m.drift.y.back();
  return m;
}

/// (baseline - corrected) / baseline in percent; 0 when both are zero.
inline double improvement_pct(double baseline, double corrected) {
  if (baseline == 0.0) {
    if (corrected == 0.0) return 0.0;
    return corrected > 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }
  return (baseline - corrected) / baseline * 100.0;
}

struct MetricImprovement {
  double final_position_error = 0.0;
  double median_vx_error = 0.0;
  double median_vy_error = 0.0;
  double drift_final_x = 0.0;
  double drift_final_y = 0.0;
};

struct MetricsReport {
  TrialMetrics baseline;
  TrialMetrics corrected;
  MetricImprovement improvement_pct;
};

inline MetricsReport summarize(const TrialLog& baseline_log, const TrialLog& corrected_log) {
  if (baseline_log.size() != corrected_log.size() || baseline_log.times != corrected_log.times ||
      baseline_log.desired_velocities != corrected_log.desired_velocities)
    throw std::invalid_argument("summarize: logs do not share a time base and reference");
  MetricsReport r;
  r.baseline = trial_metrics(baseline_log);
  r.corrected = trial_metrics(corrected_log);
  const auto& b = r.baseline;
  const auto& c = r.corrected;
  r.improvement_pct = {improvement_pct(b.final_position_error, c.final_position_error),
                       improvement_pct(b.median_vx_error, c.median_vx_error),
                       improvement_pct(b.median_vy_error, c.median_vy_error),
                       improvement_pct(b.drift_final_x, c.drift_final_x),
                       improvement_pct(b.drift_final_y, c.drift_final_y)};
  return r;
}

}  // namespace mbot
