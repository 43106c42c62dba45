#pragma once

// Learning-phase data processing: velocity reconstruction, estimation of
// the mean disturbance and effective radius, and GP training-set assembly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "mbot/plant_sim.hpp"
#include "mbot/vec2.hpp"

namespace mbot {

/// Time-indexed record of one run. Row k holds the state at the start of
/// step k, the command held during that step and the velocities over it.
struct TrialLog {
  std::vector<double> times;
  std::vector<Vec2> positions;
  std::vector<ControlInput> commands;
  std::vector<Vec2> desired_velocities;
  std::vector<Vec2> actual_velocities;

  [[nodiscard]] std::size_t size() const { return times.size(); }

  /// Throws unless all columns have equal length.
  void check_consistent() const {
    const std::size_t n = times.size();
    if (positions.size() != n || commands.size() != n || desired_velocities.size() != n ||
        actual_velocities.size() != n)
      throw std::invalid_argument("trial log: columns differ in length");
  }

  /// Sample spacing; throws unless times are strictly increasing and uniform.
  [[nodiscard]] double uniform_dt() const {
    if (times.size() < 2) throw std::invalid_argument("trial log: need at least two samples for a time step");
    const double dt = times[1] - times[0];
    if (!(dt > 0.0)) throw std::invalid_argument("trial log: times must be strictly increasing");
    for (std::size_t k = 1; k < times.size(); ++k) {
      const double d = times[k] - times[k - 1];
      if (!(d > 0.0) || std::abs(d - dt) > 1e-9 * std::max(1.0, std::abs(times[k])))
        throw std::invalid_argument("trial log: times are not uniformly spaced");
    }
    return dt;
  }

  friend bool operator==(const TrialLog&, const TrialLog&) = default;
};

struct TrainingSet {
  std::vector<double> headings;
  std::vector<double> err_x;
  std::vector<double> err_y;

  [[nodiscard]] std::size_t size() const { return headings.size(); }
};

/// Central differences in the interior, one-sided at both ends.
inline std::vector<Vec2> differentiate_positions(const TrialLog& log) {
  if (log.positions.size() < 2 || log.times.size() != log.positions.size())
    throw std::invalid_argument("differentiate_positions: need at least two position samples");
  const double dt = log.uniform_dt();
  const auto& p = log.positions;
  const std::size_t n = p.size();
  std::vector<Vec2> v(n);
  v.front() = (p[1] - p[0]) / dt;
  v.back() = (p[n - 1] - p[n - 2]) / dt;
  for (std::size_t k = 1; k + 1 < n; ++k) v[k] = (p[k + 1] - p[k - 1]) / (2.0 * dt);
  return v;
}

/// Mean velocity over each zero-order-hold interval: `positions` has one
/// more sample than the returned list, v[k] = (p[k+1] - p[k]) / dt.
/// This is the central difference about each interval midpoint.
inline std::vector<Vec2> hold_interval_velocities(std::span<const Vec2> positions, double dt) {
  if (positions.size() < 2) throw std::invalid_argument("hold_interval_velocities: need at least two positions");
  if (!(dt > 0.0)) throw std::invalid_argument("hold_interval_velocities: dt must be positive");
  std::vector<Vec2> v(positions.size() - 1);
  for (std::size_t k = 0; k + 1 < positions.size(); ++k) v[k] = (positions[k + 1] - positions[k]) / dt;
  return v;
}

/// First-order IIR smoother: out[k] = (1 - beta) out[k-1] + beta raw[k].
inline std::vector<Vec2> low_pass(std::span<const Vec2> raw, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("low_pass: beta must lie in (0, 1]");
  std::vector<Vec2> out(raw.size());
  if (raw.empty()) return out;
  out[0] = raw[0];
  for (std::size_t k = 1; k < raw.size(); ++k) out[k] = (1.0 - beta) * out[k - 1] + beta * raw[k];
  return out;
}

/// Componentwise mean of the zero-input velocities.
inline Vec2 estimate_disturbance(const TrialLog& zero_input_log) {
  const auto& v = zero_input_log.actual_velocities;
  if (v.empty()) throw std::invalid_argument("estimate_disturbance: no velocity samples");
  Vec2 sum;
  for (const auto& s : v) sum += s;
  return sum / static_cast<double>(v.size());
}

/// Mean of ||v - d_hat|| / f over the sweep.
inline double estimate_radius(const TrialLog& sweep_log, const Vec2& d_hat, double f) {
  if (!(f > 0.0) || !std::isfinite(f)) throw std::invalid_argument("estimate_radius: f must be positive");
  const auto& v = sweep_log.actual_velocities;
  if (v.empty()) throw std::invalid_argument("estimate_radius: no velocity samples");
  double sum = 0.0;
  for (const auto& s : v) sum += (s - d_hat).norm();
  return sum / static_cast<double>(v.size()) / f;
}

/// Desired velocity implied by a command under the approximate model.
inline Vec2 nominal_velocity(const ControlInput& cmd, double a0_hat, const Vec2& d_hat) {
  return heading_vector(cmd.alpha) * (a0_hat * cmd.f) + d_hat;
}

/// Pairs each commanded heading with the observed velocity error.
inline TrainingSet build_training_set(const TrialLog& sweep_log) {
  const std::size_t n = sweep_log.commands.size();
  if (sweep_log.actual_velocities.size() != n || sweep_log.desired_velocities.size() != n)
    throw std::invalid_argument("build_training_set: commands and velocities differ in length");
  TrainingSet ts;
  ts.headings.reserve(n);
  ts.err_x.reserve(n);
  ts.err_y.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 e = sweep_log.actual_velocities[k] - sweep_log.desired_velocities[k];
    ts.headings.push_back(std::clamp(sweep_log.commands[k].alpha, -std::numbers::pi, std::numbers::pi));
    ts.err_x.push_back(e.x);
    ts.err_y.push_back(e.y);
  }
  return ts;
}

/// Keeps every stride-th sample so that at most `max_points` remain.
inline TrainingSet decimate(const TrainingSet& ts, std::size_t max_points) {
  if (max_points == 0) throw std::invalid_argument("decimate: max_points must be positive");
  if (ts.size() <= max_points) return ts;
  const std::size_t stride = (ts.size() + max_points - 1) / max_points;
  TrainingSet out;
  for (std::size_t k = 0; k < ts.size(); k += stride) {
    out.headings.push_back(ts.headings[k]);
    out.err_x.push_back(ts.err_x[k]);
    out.err_y.push_back(ts.err_y[k]);
  }
  return out;
}

/// Triangle-wave heading ramp that covers [-pi, pi] `n_sweeps` times over
/// `n_steps` samples, starting at -pi.
inline std::vector<double> sweep_schedule(int n_sweeps, int n_steps) {
  if (n_sweeps < 1 || n_steps < n_sweeps) throw std::invalid_argument("sweep_schedule: invalid sweep/step counts");
  constexpr double pi = std::numbers::pi;
  std::vector<double> out(static_cast<std::size_t>(n_steps));
  if (n_steps == 1) {
    out[0] = -pi;
    return out;
  }
  for (int k = 0; k < n_steps; ++k) {
    const double u = static_cast<double>(k) * n_sweeps / static_cast<double>(n_steps - 1);
    const double m = std::fmod(u, 2.0);
    const double frac = m <= 1.0 ? m : 2.0 - m;
    out[static_cast<std::size_t>(k)] = std::clamp(-pi + 2.0 * pi * frac, -pi, pi);
  }
  return out;
}

}  // namespace mbot
