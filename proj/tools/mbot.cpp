// Command-line harness: learn, track, compare and montecarlo subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbot/experiment.hpp"
#include "mbot/io.hpp"

namespace {

constexpr const char* kOutputDirEnv = "MBOT_OUTPUT_DIR";

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string seed;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("-c,--config", args.config_file, "key=value configuration file");
  sub->add_option("-s,--set", args.overrides, "override one key, e.g. --set noise_sigma=0")->take_all();
  sub->add_option("-o,--out", args.output_dir, "output directory (overrides " + std::string(kOutputDirEnv) + ")");
  sub->add_option("--seed", args.seed, "base random seed");
}

// Precedence: defaults < config file < environment < flags.
mbot::ExperimentConfig resolve_config(const CommonArgs& args) {
  mbot::ExperimentConfig cfg;
  if (!args.config_file.empty()) mbot::apply_config_file(cfg, args.config_file);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
  for (const auto& o : args.overrides) {
    const auto [k, v] = mbot::split_assignment(o);
    mbot::apply_config_value(cfg, k, v);
  }
  if (!args.seed.empty()) mbot::apply_config_value(cfg, "rng_seed", args.seed);
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw mbot::ConfigError(e.what());
  }
  return cfg;
}

std::string out_path(const mbot::ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void print_report(const mbot::MetricsReport& r) {
  auto row = [](const char* name, double b, double c, double p) {
    std::printf("%-22s baseline %10.4f  corrected %10.4f  improvement %7.2f%%\n", name, b, c, p);
  };
  const auto& b = r.baseline;
  const auto& c = r.corrected;
  const auto& p = r.improvement_pct;
  row("final_position_error", b.final_position_error, c.final_position_error, p.final_position_error);
  row("median_vx_error", b.median_vx_error, c.median_vx_error, p.median_vx_error);
  row("median_vy_error", b.median_vy_error, c.median_vy_error, p.median_vy_error);
  row("drift_final_x", b.drift_final_x, c.drift_final_x, p.drift_final_x);
  row("drift_final_y", b.drift_final_y, c.drift_final_y, p.drift_final_y);
}

int cmd_learn(const CommonArgs& args) {
  const auto cfg = resolve_config(args);
  const auto art = mbot::run_learning_phase(cfg);
  mbot::write_trial_csv_file(out_path(cfg, "zero_phase.csv"), art.zero_log);
  mbot::write_trial_csv_file(out_path(cfg, "sweep.csv"), art.sweep_log);
  auto j = mbot::artifacts_to_json(art);
  j["config_hash"] = mbot::config_hash(cfg);
  j["seed"] = cfg.rng_seed;
  mbot::write_json_file(out_path(cfg, "learning.json"), j);
  std::printf("a0_hat %.6f  d_hat (%.6f, %.6f)  training points %zu\n", art.estimate.a0_hat, art.estimate.d_hat.x,
              art.estimate.d_hat.y, art.training.size());
  return 0;
}

int cmd_track(const CommonArgs& args, const std::string& mode_name, const std::string& artifacts_file) {
  const auto cfg = resolve_config(args);
  mbot::TrackingMode mode;
  if (mode_name == "baseline") mode = mbot::TrackingMode::baseline;
  else if (mode_name == "corrected") mode = mbot::TrackingMode::corrected;
  else throw mbot::ConfigError("--mode must be baseline or corrected");

  mbot::LearningArtifacts art;
  const mbot::LearningArtifacts* art_ptr = nullptr;
  if (mode == mbot::TrackingMode::corrected) {
    if (!artifacts_file.empty()) {
      try {
        art = mbot::artifacts_from_json(mbot::read_json_file(artifacts_file));
      } catch (const nlohmann::json::exception& e) {
        throw mbot::ConfigError(artifacts_file + ": " + e.what());
      }
    } else {
      art = mbot::run_learning_phase(cfg);
    }
    art_ptr = &art;
  }
  const auto log = mbot::run_tracking_trial(cfg, mode, art_ptr);
  const std::string stem = std::string("track_") + mbot::to_string(mode);
  mbot::write_trial_csv_file(out_path(cfg, stem + ".csv"), log);
  const auto m = mbot::trial_metrics(log);
  nlohmann::json j{{"mode", mbot::to_string(mode)},
                   {"final_position_error", m.final_position_error},
                   {"median_vx_error", m.median_vx_error},
                   {"median_vy_error", m.median_vy_error},
                   {"drift_final_x", m.drift_final_x},
                   {"drift_final_y", m.drift_final_y},
                   {"config_hash", mbot::config_hash(cfg)},
                   {"seed", cfg.rng_seed}};
  mbot::write_json_file(out_path(cfg, stem + ".json"), j);
  std::printf("%s: final position error %.4f microns\n", mbot::to_string(mode), m.final_position_error);
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const auto cfg = resolve_config(args);
  const auto trial = mbot::run_paired_trial(cfg);
  mbot::write_trial_csv_file(out_path(cfg, "baseline.csv"), trial.baseline);
  mbot::write_trial_csv_file(out_path(cfg, "corrected.csv"), trial.corrected);
  mbot::write_json_file(out_path(cfg, "summary.json"), mbot::report_to_json(trial.report, cfg));
  print_report(trial.report);
  return 0;
}

int cmd_montecarlo(const CommonArgs& args, int trials, unsigned threads) {
  CommonArgs a = args;
  if (trials > 0) a.overrides.push_back("n_trials=" + std::to_string(trials));
  const auto cfg = resolve_config(a);
  const auto s = mbot::run_monte_carlo(cfg, threads);
  {
    std::ofstream os(out_path(cfg, "montecarlo_trials.csv"), std::ios::binary);
    if (!os) throw std::runtime_error("cannot write montecarlo_trials.csv");
    mbot::write_monte_carlo_csv(os, s);
  }
  mbot::write_json_file(out_path(cfg, "summary.json"), mbot::monte_carlo_to_json(s, cfg));
  auto row = [&](const char* name, const mbot::MetricAggregate& m) {
    std::printf("%-22s improvement %7.2f%% +- %6.2f  wins %d/%zu\n", name, m.improvement_pct.mean,
                m.improvement_pct.stddev, m.wins, s.trials.size());
  };
  row("final_position_error", s.final_position_error);
  row("median_vx_error", s.median_vx_error);
  row("median_vy_error", s.median_vy_error);
  row("drift_final_x", s.drift_final_x);
  row("drift_final_y", s.drift_final_y);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned model-mismatch heading control for rolling microrobots (simulation harness)"};
  app.require_subcommand(1);

  CommonArgs learn_args, track_args, compare_args, mc_args;
  auto* learn = app.add_subcommand("learn", "run the learning phase and save the learned model");
  add_common(learn, learn_args);

  std::string mode = "corrected", artifacts;
  auto* track = app.add_subcommand("track", "run one open-loop tracking trial");
  add_common(track, track_args);
  track->add_option("-m,--mode", mode, "baseline or corrected")->capture_default_str();
  track->add_option("-a,--artifacts", artifacts, "learning.json from a previous `learn` run");

  auto* compare = app.add_subcommand("compare", "learning phase plus paired baseline/corrected trials");
  add_common(compare, compare_args);

  int trials = 0;
  unsigned threads = 0;
  auto* mc = app.add_subcommand("montecarlo", "repeated paired trials with per-trial seeds");
  add_common(mc, mc_args);
  mc->add_option("-n,--trials", trials, "number of paired trials (overrides n_trials)");
  mc->add_option("-j,--threads", threads, "worker threads (0 = hardware concurrency)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*learn) return cmd_learn(learn_args);
    if (*track) return cmd_track(track_args, mode, artifacts);
    if (*compare) return cmd_compare(compare_args);
    if (*mc) return cmd_montecarlo(mc_args, trials, threads);
  } catch (const mbot::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
