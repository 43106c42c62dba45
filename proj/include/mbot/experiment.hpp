#pragma once

// In-silico protocol: zero-input window, heading sweep, then paired
// baseline/corrected open-loop tracking trials.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mbot/calibration.hpp"
#include "mbot/gp_regress.hpp"
#include "mbot/metrics.hpp"
#include "mbot/mismatch_controller.hpp"
#include "mbot/plant_sim.hpp"

namespace mbot {

enum class ReferenceKind { line, circle, script };

struct HeadingSegment {
  double duration = 0.0;  // s
  double heading = 0.0;   // rad
  friend bool operator==(const HeadingSegment&, const HeadingSegment&) = default;
};

/// Desired trajectory. All shapes move at the nominal speed a0_seed * f_fixed,
/// so the reference is exactly what the nominal model produces.
struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::circle;
  double radius = 0.8;   // circle radius, microns (one loop per 10 s at 0.5 microns/s)
  double heading = 0.0;  // line heading, or initial circle heading, rad
  std::string script_path;
  std::vector<HeadingSegment> script;
};

struct ExperimentConfig {
  PlantConfig plant;
  double nominal_a0_seed = 0.5;  // microns
  double f_fixed = 1.0;          // Hz
  double gamma = 0.0;            // attitude, rad
  int zero_phase_steps = 100;
  int sweep_steps = 1800;
  int n_sweeps = 3;
  int track_steps = 300;
  ReferenceSpec reference;
  int n_trials = 100;
  std::uint64_t rng_seed = 7;
  std::string output_dir = "out";
  double low_pass_beta = 0.3;
  int gp_max_points = 100;
  int gp_starts = 8;
  int gp_max_iterations = 100;
  int grid_points = 720;
  double refine_tolerance = 1e-6;

  void validate() const {
    plant.validate();
    if (!(nominal_a0_seed > 0.0)) throw std::invalid_argument("config: nominal_a0_seed must be positive");
    if (!(f_fixed > 0.0) || !std::isfinite(f_fixed)) throw std::invalid_argument("config: f_fixed must be positive");
    if (!(gamma >= -std::numbers::pi && gamma <= std::numbers::pi))
      throw std::invalid_argument("config: gamma must lie in [-pi, pi]");
    if (zero_phase_steps < 1 || sweep_steps < 2 || n_sweeps < 1 || track_steps < 2 || n_trials < 1)
      throw std::invalid_argument("config: step and trial counts must be positive");
    if (sweep_steps < n_sweeps) throw std::invalid_argument("config: sweep_steps must be at least n_sweeps");
    if (!(low_pass_beta > 0.0 && low_pass_beta <= 1.0))
      throw std::invalid_argument("config: low_pass_beta must lie in (0, 1]");
    if (gp_max_points < 2 || gp_starts < 1 || gp_max_iterations < 1)
      throw std::invalid_argument("config: gp settings must be positive");
    if (grid_points < 3 || !(refine_tolerance > 0.0)) throw std::invalid_argument("config: invalid solver settings");
    if (reference.kind == ReferenceKind::circle && !(reference.radius > 0.0))
      throw std::invalid_argument("config: reference_radius must be positive");
    if (reference.kind == ReferenceKind::script) {
      if (reference.script.empty()) throw std::invalid_argument("config: heading script is empty");
      for (const auto& s : reference.script)
        if (!(s.duration > 0.0)) throw std::invalid_argument("config: script durations must be positive");
    }
  }

  [[nodiscard]] double reference_speed() const { return nominal_a0_seed * f_fixed; }
  [[nodiscard]] ModelEstimate nominal_estimate() const { return {nominal_a0_seed, {}, f_fixed}; }
};

/// Analytic desired velocity of the reference at time t.
inline Vec2 reference_velocity(const ExperimentConfig& cfg, double t) {
  const double s = cfg.reference_speed();
  const auto& ref = cfg.reference;
  switch (ref.kind) {
    case ReferenceKind::line:
      return heading_vector(ref.heading) * s;
    case ReferenceKind::circle:
      return heading_vector(ref.heading + s / ref.radius * t) * s;
    case ReferenceKind::script: {
      double end = 0.0;
      for (const auto& seg : ref.script) {
        end += seg.duration;
        if (t < end) return heading_vector(seg.heading) * s;
      }
      return heading_vector(ref.script.back().heading) * s;
    }
  }
  return {};
}

/// SplitMix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class SeedStream : std::uint64_t { learning = 1, tracking = 2, gp = 3 };

inline std::uint64_t trial_seed(std::uint64_t base, int trial, SeedStream stream) {
  return mix_seed(mix_seed(base ^ mix_seed(static_cast<std::uint64_t>(trial))) + static_cast<std::uint64_t>(stream));
}

namespace detail {

/// Runs `commands` on the plant. Rows carry the pre-step state; velocities
/// are hold-interval differences of the sampled positions.
inline TrialLog record_run(Plant& plant, const std::vector<ControlInput>& commands) {
  TrialLog log;
  std::vector<Vec2> samples;
  samples.reserve(commands.size() + 1);
  for (const auto& cmd : commands) {
    log.times.push_back(plant.state().t);
    log.positions.push_back(plant.state().p);
    log.commands.push_back(cmd);
    samples.push_back(plant.state().p);
    plant.advance(cmd);
  }
  samples.push_back(plant.state().p);
  log.actual_velocities = hold_interval_velocities(samples, plant.config().dt);
  return log;
}

}  // namespace detail

struct LearningArtifacts {
  ModelEstimate estimate;
  GPModel gp_x;
  GPModel gp_y;
  TrialLog zero_log;
  TrialLog sweep_log;
  TrainingSet training;  // after decimation, as fed to the GPs
};

inline Plant learning_plant(const ExperimentConfig& cfg, int trial) {
  PlantConfig pc = cfg.plant;
  pc.rng_seed = trial_seed(cfg.rng_seed, trial, SeedStream::learning);
  return Plant(pc);
}

/// Zero-input window: f = 0 for zero_phase_steps, velocities filtered.
inline TrialLog run_zero_phase(const ExperimentConfig& cfg, Plant& plant) {
  std::vector<ControlInput> zero(static_cast<std::size_t>(cfg.zero_phase_steps), ControlInput{0.0, 0.0, cfg.gamma});
  TrialLog log = detail::record_run(plant, zero);
  log.actual_velocities = low_pass(log.actual_velocities, cfg.low_pass_beta);
  log.desired_velocities.assign(log.size(), Vec2{});
  return log;
}

/// Zero-input window (disturbance mean), heading sweep (effective radius),
/// training-set assembly and GP fits.
inline LearningArtifacts run_learning_phase(const ExperimentConfig& cfg, int trial = 0) {
  cfg.validate();
  Plant plant = learning_plant(cfg, trial);
  LearningArtifacts art;

  art.zero_log = run_zero_phase(cfg, plant);
  const Vec2 d_hat = estimate_disturbance(art.zero_log);

  std::vector<ControlInput> sweep;
  for (double a : sweep_schedule(cfg.n_sweeps, cfg.sweep_steps)) sweep.push_back({a, cfg.f_fixed, cfg.gamma});
  art.sweep_log = detail::record_run(plant, sweep);
  art.sweep_log.actual_velocities = low_pass(art.sweep_log.actual_velocities, cfg.low_pass_beta);
  const double a0_hat = estimate_radius(art.sweep_log, d_hat, cfg.f_fixed);
  art.estimate = {a0_hat, d_hat, cfg.f_fixed};
  for (const auto& cmd : art.sweep_log.commands)
    art.sweep_log.desired_velocities.push_back(nominal_velocity(cmd, a0_hat, d_hat));

  art.training = decimate(build_training_set(art.sweep_log), static_cast<std::size_t>(cfg.gp_max_points));
  FitOptions fo;
  fo.n_starts = cfg.gp_starts;
  fo.max_iterations = cfg.gp_max_iterations;
  fo.seed = trial_seed(cfg.rng_seed, trial, SeedStream::gp);
  const KernelParams init{1.0, 1.0, 1e-2};
  art.gp_x = fit(art.training.headings, art.training.err_x, init, fo);
  art.gp_y = fit(art.training.headings, art.training.err_y, init, fo);
  return art;
}

enum class TrackingMode { baseline, corrected };

inline const char* to_string(TrackingMode m) { return m == TrackingMode::baseline ? "baseline" : "corrected"; }

/// Open-loop tracking of the reference. Baseline inverts the nominal
/// (pre-learning) model and never looks at `artifacts`; corrected runs the
/// GP-augmented heading search on the learned model. A degenerate
/// inversion holds the previous heading with f = 0.
inline TrialLog run_tracking_trial(const ExperimentConfig& cfg, TrackingMode mode,
                                   const LearningArtifacts* artifacts, int trial = 0) {
  cfg.validate();
  if (mode == TrackingMode::corrected && artifacts == nullptr)
    throw std::invalid_argument("run_tracking_trial: corrected mode needs learning artifacts");
  PlantConfig pc = cfg.plant;
  pc.rng_seed = trial_seed(cfg.rng_seed, trial, SeedStream::tracking);
  Plant plant(pc);

  std::optional<HeadingSolver> solver;
  if (mode == TrackingMode::corrected)
    solver.emplace(artifacts->estimate, artifacts->gp_x, artifacts->gp_y,
                   SolverOptions{cfg.grid_points, cfg.refine_tolerance});
  const ModelEstimate nominal = cfg.nominal_estimate();

  TrialLog log;
  std::vector<Vec2> samples;
  double previous_alpha = 0.0;
  for (int k = 0; k < cfg.track_steps; ++k) {
    const double t = plant.state().t;
    const Vec2 v_d = reference_velocity(cfg, t);
    ControlInput cmd{previous_alpha, cfg.f_fixed, cfg.gamma};
    if (mode == TrackingMode::baseline) {
      try {
        cmd.alpha = baseline_heading(v_d, nominal);
      } catch (const DegenerateHeading&) {
        cmd.f = 0.0;
      }
    } else {
      cmd.alpha = solver->solve(v_d).alpha_star;
    }
    previous_alpha = cmd.alpha;
    log.times.push_back(t);
    log.positions.push_back(plant.state().p);
    log.commands.push_back(cmd);
    log.desired_velocities.push_back(v_d);
    samples.push_back(plant.state().p);
    plant.advance(cmd);
  }
  samples.push_back(plant.state().p);
  log.actual_velocities = hold_interval_velocities(samples, pc.dt);
  return log;
}

struct PairedTrial {
  TrialLog baseline;
  TrialLog corrected;
  MetricsReport report;
};

/// Learning then baseline and corrected runs sharing the plant noise stream.
inline PairedTrial run_paired_trial(const ExperimentConfig& cfg, int trial = 0) {
  const LearningArtifacts art = run_learning_phase(cfg, trial);
  PairedTrial out;
  out.baseline = run_tracking_trial(cfg, TrackingMode::baseline, nullptr, trial);
  out.corrected = run_tracking_trial(cfg, TrackingMode::corrected, &art, trial);
  out.report = summarize(out.baseline, out.corrected);
  return out;
}

struct Spread {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline Spread spread_of(const std::vector<double>& v) {
  Spread s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

struct MetricAggregate {
  Spread baseline;
  Spread corrected;
  Spread improvement_pct;
  int wins = 0;  // trials where corrected < baseline
};

struct MonteCarloSummary {
  std::vector<MetricsReport> trials;
  MetricAggregate final_position_error;
  MetricAggregate median_vx_error;
  MetricAggregate median_vy_error;
  MetricAggregate drift_final_x;
  MetricAggregate drift_final_y;
};

namespace detail {

template <class Get, class GetPct>
MetricAggregate aggregate(const std::vector<MetricsReport>& trials, Get get, GetPct pct) {
  std::vector<double> b, c, p;
  MetricAggregate a;
  for (const auto& r : trials) {
    b.push_back(get(r.baseline));
    c.push_back(get(r.corrected));
    p.push_back(pct(r.improvement_pct));
    if (get(r.corrected) < get(r.baseline)) ++a.wins;
  }
  a.baseline = spread_of(b);
  a.corrected = spread_of(c);
  a.improvement_pct = spread_of(p);
  return a;
}

}  // namespace detail

/// Independent paired trials run on worker threads; results are reduced
/// in trial order so the summary does not depend on scheduling.
inline MonteCarloSummary run_monte_carlo(const ExperimentConfig& cfg, unsigned workers = 0) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_trials);
  std::vector<MetricsReport> reports(n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        reports[i] = run_paired_trial(cfg, static_cast<int>(i)).report;
        reports[i].baseline.drift = {};
        reports[i].corrected.drift = {};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  MonteCarloSummary s;
  s.trials = std::move(reports);
  s.final_position_error = detail::aggregate(
      s.trials, [](const TrialMetrics& m) { return m.final_position_error; },
      [](const MetricImprovement& m) { return m.final_position_error; });
  s.median_vx_error = detail::aggregate(
      s.trials, [](const TrialMetrics& m) { return m.median_vx_error; },
      [](const MetricImprovement& m) { return m.median_vx_error; });
  s.median_vy_error = detail::aggregate(
      s.trials, [](const TrialMetrics& m) { return m.median_vy_error; },
      [](const MetricImprovement& m) { return m.median_vy_error; });
  s.drift_final_x = detail::aggregate(
      s.trials, [](const TrialMetrics& m) { return m.drift_final_x; },
      [](const MetricImprovement& m) { return m.drift_final_x; });
  s.drift_final_y = detail::aggregate(
      s.trials, [](const TrialMetrics& m) { return m.drift_final_y; },
      [](const MetricImprovement& m) { return m.drift_final_y; });
  return s;
}

}  // namespace mbot
