#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "mbot/io.hpp"

namespace mbot {
namespace {

TrialLog sample_log() {
  TrialLog log;
  for (int k = 0; k < 25; ++k) {
    const double t = k / 30.0;
    log.times.push_back(t);
    log.commands.push_back({std::sin(0.3 * k) * 3.0, 1.0, 0.25});
    log.positions.push_back({0.123456789123 * k, -std::sqrt(2.0) * k});
    log.desired_velocities.push_back({std::cos(t), std::sin(t) / 3.0});
    log.actual_velocities.push_back({std::cos(t) + 1.0 / 7.0, std::exp(-t)});
  }
  return log;
}

std::string to_csv(const TrialLog& log) {
  std::ostringstream os;
  write_trial_csv(os, log);
  return os.str();
}

TEST(Csv, HeaderAndNineSignificantDigits) {
  const std::string text = to_csv(sample_log());
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,alpha_cmd,f_cmd,px,py,vx,vy,vdx,vdy,vex,vey");
  EXPECT_EQ(format_sig9(std::numbers::pi), "3.14159265");
  EXPECT_EQ(format_sig9(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_sig9(0.0), "0");
}

TEST(Csv, ErrorColumnsAreActualMinusDesired) {
  TrialLog log;
  log.times = {0.0};
  log.commands = {{0.5, 1.0, 0.0}};
  log.positions = {{1, 2}};
  log.desired_velocities = {{0.25, 1.0}};
  log.actual_velocities = {{1.0, 0.5}};
  const std::string text = to_csv(log);
  EXPECT_EQ(text.substr(text.find('\n') + 1), "0,0.5,1,1,2,1,0.5,0.25,1,0.75,-0.5\n");
}

TEST(Csv, RoundTripIsStable) {
  const std::string first = to_csv(sample_log());
  std::istringstream is(first);
  const TrialLog back = read_trial_csv(is, 0.25);
  EXPECT_EQ(to_csv(back), first);
  std::istringstream again(to_csv(back));
  EXPECT_EQ(read_trial_csv(again, 0.25), back);
}

TEST(Csv, ReadBackMatchesWithinPrintedPrecision) {
  const TrialLog log = sample_log();
  std::istringstream is(to_csv(log));
  const TrialLog back = read_trial_csv(is, 0.25);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    EXPECT_NEAR(back.positions[k].y, log.positions[k].y, 1e-8 * std::abs(log.positions[k].y) + 1e-300);
    EXPECT_NEAR(back.commands[k].alpha, log.commands[k].alpha, 1e-8 * std::abs(log.commands[k].alpha) + 1e-300);
    EXPECT_EQ(back.commands[k].gamma, 0.25);
  }
}

TEST(Csv, RejectsBadInput) {
  std::istringstream wrong_header("t,alpha\n1,2\n");
  EXPECT_THROW(read_trial_csv(wrong_header), ConfigError);
  std::istringstream short_row(std::string(kTrialCsvHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_trial_csv(short_row), ConfigError);
  std::istringstream bad_cell(std::string(kTrialCsvHeader) + "\n0,x,1,0,0,0,0,0,0,0,0\n");
  EXPECT_THROW(read_trial_csv(bad_cell), ConfigError);
}

TEST(HeadingScript, ParsesSegmentsAndComments) {
  std::istringstream is("# square\n1.5 0\n\n2 1.5707963  # up\n");
  const auto segs = parse_heading_script(is);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0], (HeadingSegment{1.5, 0.0}));
  EXPECT_DOUBLE_EQ(segs[1].heading, 1.5707963);
  std::istringstream bad("1 2 3\n");
  EXPECT_THROW(parse_heading_script(bad), ConfigError);
  std::istringstream negative("-1 0\n");
  EXPECT_THROW(parse_heading_script(negative), ConfigError);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(parse_heading_script(empty), ConfigError);
}

TEST(ConfigText, AppliesKeysAndComments) {
  ExperimentConfig cfg;
  std::istringstream is(
      "# plant\n"
      "a0_true = 0.75\n"
      "noise_sigma=0\n"
      "mismatch_enabled = false\n"
      "seed = 99   # base seed\n"
      "reference = line\n"
      "track_steps=42\n");
  apply_config_text(cfg, is);
  EXPECT_EQ(cfg.plant.a0_true, 0.75);
  EXPECT_EQ(cfg.plant.noise_sigma, 0.0);
  EXPECT_FALSE(cfg.plant.mismatch_enabled);
  EXPECT_EQ(cfg.rng_seed, 99u);
  EXPECT_EQ(cfg.reference.kind, ReferenceKind::line);
  EXPECT_EQ(cfg.track_steps, 42);
}

TEST(ConfigText, RejectsUnknownAndMalformed) {
  ExperimentConfig cfg;
  std::istringstream unknown("warp_speed = 9\n");
  EXPECT_THROW(apply_config_text(cfg, unknown), ConfigError);
  std::istringstream no_eq("a0_true 0.5\n");
  EXPECT_THROW(apply_config_text(cfg, no_eq), ConfigError);
  std::istringstream bad_number("dt = fast\n");
  EXPECT_THROW(apply_config_text(cfg, bad_number), ConfigError);
  std::istringstream bad_bool("mismatch_enabled = maybe\n");
  EXPECT_THROW(apply_config_text(cfg, bad_bool), ConfigError);
}

TEST(ConfigText, CanonicalDumpRoundTrips) {
  ExperimentConfig cfg;
  cfg.plant.d_bias = {0.1 / 3.0, -0.7};
  cfg.gamma = 0.3;
  cfg.n_trials = 12;
  cfg.output_dir = "results/run";
  const std::string text = config_to_text(cfg);
  ExperimentConfig back;
  std::istringstream is(text);
  apply_config_text(back, is);
  EXPECT_EQ(config_to_text(back), text);
  EXPECT_EQ(back.plant.d_bias, cfg.plant.d_bias);
}

TEST(ConfigHash, StableAndSensitive) {
  ExperimentConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.rng_seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Json, ReportHasExpectedKeys) {
  MetricsReport r;
  r.baseline.median_vx_error = 2.0;
  r.corrected.median_vx_error = 1.0;
  r.improvement_pct.median_vx_error = 50.0;
  ExperimentConfig cfg;
  const auto j = report_to_json(r, cfg);
  for (const char* key :
       {"final_position_error", "median_vx_error", "median_vy_error", "drift_final_x", "drift_final_y"}) {
    ASSERT_TRUE(j.contains(key)) << key;
    for (const char* sub : {"baseline", "corrected", "improvement_pct"}) EXPECT_TRUE(j[key].contains(sub));
  }
  EXPECT_EQ(j["median_vx_error"]["improvement_pct"], 50.0);
  EXPECT_EQ(j["config_hash"], config_hash(cfg));
  EXPECT_EQ(j["seed"], cfg.rng_seed);
}

TEST(Json, ArtifactsRoundTrip) {
  LearningArtifacts a;
  a.estimate = {0.61, {0.49, -0.31}, 1.0};
  a.gp_x = GPModel::condition({-1.0, 0.0, 1.0}, {0.1, 0.2, 0.3}, {0.8, 0.5, 1e-3});
  a.gp_y = GPModel::condition({-1.0, 0.0, 1.0}, {-0.1, 0.0, 0.4}, {1.2, 0.7, 1e-3});
  const auto back = artifacts_from_json(nlohmann::json::parse(artifacts_to_json(a).dump()));
  EXPECT_EQ(back.estimate, a.estimate);
  for (double q = -2; q <= 2; q += 0.25) {
    EXPECT_EQ(back.gp_x.predict_mean(q), a.gp_x.predict_mean(q));
    EXPECT_EQ(back.gp_y.predict(q).variance, a.gp_y.predict(q).variance);
  }
}

}  // namespace
}  // namespace mbot
