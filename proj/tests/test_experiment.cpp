#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "mbot/experiment.hpp"

namespace mbot {
namespace {

constexpr double pi = std::numbers::pi;

// Shorter protocol so the suite stays quick.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.sweep_steps = 600;
  cfg.gp_max_points = 100;
  cfg.gp_starts = 3;
  cfg.track_steps = 150;
  return cfg;
}

ExperimentConfig noiseless(ExperimentConfig cfg) {
  cfg.plant.noise_sigma = 0.0;
  cfg.low_pass_beta = 1.0;
  return cfg;
}

TEST(Seeds, StreamsAndTrialsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (int t = 0; t < 100; ++t)
    for (auto s : {SeedStream::learning, SeedStream::tracking, SeedStream::gp}) seen.insert(trial_seed(7, t, s));
  EXPECT_EQ(seen.size(), 300u);
  EXPECT_EQ(trial_seed(7, 3, SeedStream::gp), trial_seed(7, 3, SeedStream::gp));
  EXPECT_NE(trial_seed(7, 3, SeedStream::gp), trial_seed(8, 3, SeedStream::gp));
}

TEST(Reference, LineCircleAndScript) {
  ExperimentConfig cfg;
  cfg.reference.kind = ReferenceKind::line;
  cfg.reference.heading = pi / 2;
  EXPECT_NEAR(reference_velocity(cfg, 3.0).y, 0.5, 1e-15);

  cfg.reference.kind = ReferenceKind::circle;
  cfg.reference.heading = 0.0;
  cfg.reference.radius = 0.8;
  const double period = 2 * pi * 0.8 / 0.5;
  EXPECT_NEAR(reference_velocity(cfg, period / 2).x, -0.5, 1e-12);
  EXPECT_NEAR(reference_velocity(cfg, period).x, 0.5, 1e-12);
  for (double t = 0; t < 10; t += 0.7) EXPECT_NEAR(reference_velocity(cfg, t).norm(), 0.5, 1e-12);

  cfg.reference.kind = ReferenceKind::script;
  cfg.reference.script = {{1.0, 0.0}, {2.0, pi}};
  EXPECT_NEAR(reference_velocity(cfg, 0.5).x, 0.5, 1e-15);
  EXPECT_NEAR(reference_velocity(cfg, 2.0).x, -0.5, 1e-15);
  EXPECT_NEAR(reference_velocity(cfg, 50.0).x, -0.5, 1e-15);
}

TEST(Config, ValidationRejectsBadValues) {
  ExperimentConfig cfg;
  cfg.f_fixed = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.track_steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.reference.kind = ReferenceKind::script;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Learning, PerfectModelRecoversTruth) {
  auto cfg = noiseless(small_config());
  cfg.plant.mismatch_enabled = false;
  const auto art = run_learning_phase(cfg);
  EXPECT_NEAR(art.estimate.d_hat.x, 0.0, 1e-9);
  EXPECT_NEAR(art.estimate.d_hat.y, 0.0, 1e-9);
  EXPECT_NEAR(art.estimate.a0_hat, cfg.plant.a0_true, 1e-6 * cfg.plant.a0_true);
  for (double a = -pi; a <= pi; a += 0.1) {
    EXPECT_NEAR(art.gp_x.predict_mean(a), 0.0, 1e-6);
    EXPECT_NEAR(art.gp_y.predict_mean(a), 0.0, 1e-6);
  }
}

TEST(Learning, MismatchRecoversBiasAndRadius) {
  const auto cfg = noiseless(small_config());
  const auto art = run_learning_phase(cfg);
  EXPECT_NEAR(art.estimate.d_hat.x, 0.5, 1e-9);
  EXPECT_NEAR(art.estimate.d_hat.y, -0.3, 1e-9);
  EXPECT_NEAR(art.estimate.a0_hat, 0.6, 0.6e-6);
  const auto& e = art.estimate;
  for (const auto& cmd : art.sweep_log.commands) {
    const Vec2 vd = nominal_velocity(cmd, e.a0_hat, e.d_hat);
    const Vec2 truth = velocity_error_closed_form(vd, cfg.plant.a0_true, e.a0_hat, cfg.plant.d_bias, e.d_hat);
    ASSERT_NEAR(art.gp_x.predict_mean(cmd.alpha), truth.x, 1e-3);
    ASSERT_NEAR(art.gp_y.predict_mean(cmd.alpha), truth.y, 1e-3);
  }
}

TEST(Learning, SameSeedIsBitIdentical) {
  const auto cfg = small_config();
  const auto a = run_learning_phase(cfg, 4), b = run_learning_phase(cfg, 4);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.gp_x.params(), b.gp_x.params());
  EXPECT_EQ(a.gp_y.params(), b.gp_y.params());
  EXPECT_EQ(a.zero_log, b.zero_log);
  EXPECT_EQ(a.sweep_log, b.sweep_log);
  EXPECT_LE(a.training.size(), static_cast<std::size_t>(cfg.gp_max_points));
}

TEST(Tracking, PerfectModelFollowsReference) {
  auto cfg = noiseless(small_config());
  cfg.plant.mismatch_enabled = false;
  cfg.plant.a0_true = cfg.nominal_a0_seed;
  cfg.track_steps = 300;
  const auto art = run_learning_phase(cfg);
  for (auto mode : {TrackingMode::baseline, TrackingMode::corrected}) {
    const auto log = run_tracking_trial(cfg, mode, &art);
    EXPECT_LE(final_position_error(log), 1e-6) << to_string(mode);
  }
}

TEST(Tracking, CorrectedBeatsBaselineWithoutNoise) {
  // Full protocol: one complete loop of the reference exercises every heading.
  const auto cfg = noiseless(ExperimentConfig{});
  const auto trial = run_paired_trial(cfg);
  EXPECT_LT(trial.report.corrected.median_vx_error, trial.report.baseline.median_vx_error);
  EXPECT_LT(trial.report.corrected.median_vy_error, trial.report.baseline.median_vy_error);
  EXPECT_LT(trial.report.corrected.final_position_error, trial.report.baseline.final_position_error);
}

TEST(Tracking, PairedRunsShareDisturbanceDraws) {
  const auto cfg = small_config();
  const auto trial = run_paired_trial(cfg, 2);
  const auto& b = trial.baseline;
  const auto& c = trial.corrected;
  ASSERT_EQ(b.size(), c.size());
  EXPECT_EQ(b.times, c.times);
  EXPECT_EQ(b.desired_velocities, c.desired_velocities);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const Vec2 db = b.actual_velocities[k] - plant_velocity(b.commands[k], cfg.plant, {});
    const Vec2 dc = c.actual_velocities[k] - plant_velocity(c.commands[k], cfg.plant, {});
    ASSERT_NEAR(db.x, dc.x, 1e-9);
    ASSERT_NEAR(db.y, dc.y, 1e-9);
  }
}

TEST(Tracking, CorrectedNeedsArtifacts) {
  EXPECT_THROW(run_tracking_trial(small_config(), TrackingMode::corrected, nullptr), std::invalid_argument);
}

TEST(Tracking, LogShapeAndCommands) {
  const auto cfg = small_config();
  const auto log = run_tracking_trial(cfg, TrackingMode::baseline, nullptr);
  log.check_consistent();
  EXPECT_EQ(log.size(), static_cast<std::size_t>(cfg.track_steps));
  EXPECT_NEAR(log.uniform_dt(), cfg.plant.dt, 1e-12);
  for (const auto& c : log.commands) {
    EXPECT_EQ(c.f, cfg.f_fixed);
    EXPECT_GT(c.alpha, -pi);
    EXPECT_LE(c.alpha, pi);
  }
}

TEST(MonteCarlo, ResultsIndependentOfWorkerCount) {
  auto cfg = small_config();
  cfg.n_trials = 3;
  const auto one = run_monte_carlo(cfg, 1);
  const auto three = run_monte_carlo(cfg, 3);
  ASSERT_EQ(one.trials.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(one.trials[i].baseline.final_position_error, three.trials[i].baseline.final_position_error);
    EXPECT_EQ(one.trials[i].corrected.median_vx_error, three.trials[i].corrected.median_vx_error);
  }
  EXPECT_EQ(one.median_vy_error.improvement_pct.mean, three.median_vy_error.improvement_pct.mean);
  EXPECT_EQ(one.drift_final_x.wins, three.drift_final_x.wins);
}

TEST(Spread, MeanStddevRange) {
  const auto s = spread_of({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 4.0);
}

}  // namespace
}  // namespace mbot
