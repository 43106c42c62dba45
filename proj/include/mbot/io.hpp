#pragma once

// File formats: trial-log CSV, flat key=value configuration, heading
// scripts and JSON summaries.

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbot/experiment.hpp"

namespace mbot {

/// Bad configuration text, flags or file content supplied by the user.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kTrialCsvHeader = "t,alpha_cmd,f_cmd,px,py,vx,vy,vdx,vdy,vex,vey";

/// Nine significant digits, as written to every CSV cell.
inline std::string format_sig9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Value as it reads back from its printed form.
inline double quantize_sig9(double v) { return std::strtod(format_sig9(v).c_str(), nullptr); }

/// The error columns are differences of the printed velocities, so a file
/// read back and rewritten is byte-identical.
inline void write_trial_csv(std::ostream& os, const TrialLog& log) {
  log.check_consistent();
  os << kTrialCsvHeader << '\n';
  for (std::size_t k = 0; k < log.size(); ++k) {
    const Vec2 v{quantize_sig9(log.actual_velocities[k].x), quantize_sig9(log.actual_velocities[k].y)};
    const Vec2 vd{quantize_sig9(log.desired_velocities[k].x), quantize_sig9(log.desired_velocities[k].y)};
    const double cells[] = {log.times[k], log.commands[k].alpha, log.commands[k].f, log.positions[k].x,
                            log.positions[k].y, v.x, v.y, vd.x, vd.y, v.x - vd.x, v.y - vd.y};
    for (std::size_t c = 0; c < std::size(cells); ++c) os << (c ? "," : "") << format_sig9(cells[c]);
    os << '\n';
  }
}

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " as a number: '" + text + "'");
  }
}

inline long long parse_integer(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " as an integer: '" + text + "'");
  }
}

inline std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
  if (text.empty() || text[0] == '-') throw ConfigError("cannot parse " + what + " as a seed: '" + text + "'");
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " as a seed: '" + text + "'");
  }
}

inline bool parse_bool(const std::string& text, const std::string& what) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ConfigError("cannot parse " + what + " as a boolean: '" + text + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

/// Reads a trial CSV. The attitude angle is not a column; it is supplied
/// by the caller (it is fixed per experiment).
inline TrialLog read_trial_csv(std::istream& is, double gamma = 0.0) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kTrialCsvHeader)
    throw ConfigError("trial csv: missing or unexpected header");
  TrialLog log;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 11) throw ConfigError("trial csv: row " + std::to_string(row) + " has wrong column count");
    double v[11];
    for (int c = 0; c < 11; ++c) v[c] = detail::parse_double(cells[static_cast<std::size_t>(c)], "csv cell");
    log.times.push_back(v[0]);
    log.commands.push_back({v[1], v[2], gamma});
    log.positions.push_back({v[3], v[4]});
    log.actual_velocities.push_back({v[5], v[6]});
    log.desired_velocities.push_back({v[7], v[8]});
  }
  return log;
}

inline void write_trial_csv_file(const std::string& path, const TrialLog& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_trial_csv(os, log);
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline TrialLog read_trial_csv_file(const std::string& path, double gamma = 0.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  return read_trial_csv(is, gamma);
}

/// Heading script: one `duration heading` pair per line, '#' comments.
inline std::vector<HeadingSegment> parse_heading_script(std::istream& is) {
  std::vector<HeadingSegment> segs;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra))
      throw ConfigError("heading script: line " + std::to_string(row) + " must be 'duration heading'");
    HeadingSegment s{detail::parse_double(a, "segment duration"), detail::parse_double(b, "segment heading")};
    if (!(s.duration > 0.0)) throw ConfigError("heading script: durations must be positive");
    segs.push_back(s);
  }
  if (segs.empty()) throw ConfigError("heading script: no segments");
  return segs;
}

inline std::vector<HeadingSegment> load_heading_script(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open heading script " + path);
  return parse_heading_script(is);
}

inline const char* to_string(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::line: return "line";
    case ReferenceKind::circle: return "circle";
    case ReferenceKind::script: return "script";
  }
  return "circle";
}

/// Sets one configuration key. Unknown keys are errors. Setting
/// `reference_script` loads the file immediately.
inline void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string value = trim(raw);
  auto as_int = [&](int& dst) {
    const long long v = parse_integer(value, key);
    if (v < 0 || v > 100000000) throw ConfigError(key + " is out of range");
    dst = static_cast<int>(v);
  };
  if (key == "a0_true") cfg.plant.a0_true = parse_double(value, key);
  else if (key == "d_bias_x") cfg.plant.d_bias.x = parse_double(value, key);
  else if (key == "d_bias_y") cfg.plant.d_bias.y = parse_double(value, key);
  else if (key == "noise_sigma") cfg.plant.noise_sigma = parse_double(value, key);
  else if (key == "dt") cfg.plant.dt = parse_double(value, key);
  else if (key == "mismatch_enabled") cfg.plant.mismatch_enabled = parse_bool(value, key);
  else if (key == "plant_seed") cfg.plant.rng_seed = parse_unsigned(value, key);
  else if (key == "nominal_a0_seed") cfg.nominal_a0_seed = parse_double(value, key);
  else if (key == "f_fixed") cfg.f_fixed = parse_double(value, key);
  else if (key == "gamma") cfg.gamma = parse_double(value, key);
  else if (key == "zero_phase_steps") as_int(cfg.zero_phase_steps);
  else if (key == "sweep_steps") as_int(cfg.sweep_steps);
  else if (key == "n_sweeps") as_int(cfg.n_sweeps);
  else if (key == "track_steps") as_int(cfg.track_steps);
  else if (key == "n_trials") as_int(cfg.n_trials);
  else if (key == "rng_seed" || key == "seed") cfg.rng_seed = parse_unsigned(value, key);
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "low_pass_beta") cfg.low_pass_beta = parse_double(value, key);
  else if (key == "gp_max_points") as_int(cfg.gp_max_points);
  else if (key == "gp_starts") as_int(cfg.gp_starts);
  else if (key == "gp_max_iterations") as_int(cfg.gp_max_iterations);
  else if (key == "grid_points") as_int(cfg.grid_points);
  else if (key == "refine_tolerance") cfg.refine_tolerance = parse_double(value, key);
  else if (key == "reference") {
    if (value == "line") cfg.reference.kind = ReferenceKind::line;
    else if (value == "circle") cfg.reference.kind = ReferenceKind::circle;
    else if (value == "script") cfg.reference.kind = ReferenceKind::script;
    else throw ConfigError("reference must be line, circle or script");
  } else if (key == "reference_radius") cfg.reference.radius = parse_double(value, key);
  else if (key == "reference_heading") cfg.reference.heading = parse_double(value, key);
  else if (key == "reference_script") {
    cfg.reference.script_path = value;
    cfg.reference.script = load_heading_script(value);
  } else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Splits "key=value"; throws on a missing '='.
inline std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  return {detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1))};
}

/// Applies a flat key=value document on top of `cfg`.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& is) {
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      const auto [k, v] = split_assignment(line);
      apply_config_value(cfg, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(row) + ": " + e.what());
    }
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  apply_config_text(cfg, is);
}

/// Canonical key=value dump, keys sorted. Round-trips through apply_config_text.
inline std::string config_to_text(const ExperimentConfig& cfg) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::map<std::string, std::string> kv{
      {"a0_true", num(cfg.plant.a0_true)},
      {"d_bias_x", num(cfg.plant.d_bias.x)},
      {"d_bias_y", num(cfg.plant.d_bias.y)},
      {"noise_sigma", num(cfg.plant.noise_sigma)},
      {"dt", num(cfg.plant.dt)},
      {"mismatch_enabled", cfg.plant.mismatch_enabled ? "true" : "false"},
      {"plant_seed", std::to_string(cfg.plant.rng_seed)},
      {"nominal_a0_seed", num(cfg.nominal_a0_seed)},
      {"f_fixed", num(cfg.f_fixed)},
      {"gamma", num(cfg.gamma)},
      {"zero_phase_steps", std::to_string(cfg.zero_phase_steps)},
      {"sweep_steps", std::to_string(cfg.sweep_steps)},
      {"n_sweeps", std::to_string(cfg.n_sweeps)},
      {"track_steps", std::to_string(cfg.track_steps)},
      {"n_trials", std::to_string(cfg.n_trials)},
      {"rng_seed", std::to_string(cfg.rng_seed)},
      {"output_dir", cfg.output_dir},
      {"low_pass_beta", num(cfg.low_pass_beta)},
      {"gp_max_points", std::to_string(cfg.gp_max_points)},
      {"gp_starts", std::to_string(cfg.gp_starts)},
      {"gp_max_iterations", std::to_string(cfg.gp_max_iterations)},
      {"grid_points", std::to_string(cfg.grid_points)},
      {"refine_tolerance", num(cfg.refine_tolerance)},
      {"reference", to_string(cfg.reference.kind)},
      {"reference_radius", num(cfg.reference.radius)},
      {"reference_heading", num(cfg.reference.heading)},
  };
  if (!cfg.reference.script_path.empty()) kv["reference_script"] = cfg.reference.script_path;
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// FNV-1a 64 of the canonical config text, excluding output_dir, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// JSON documents

inline nlohmann::json estimate_to_json(const ModelEstimate& e) {
  return {{"a0_hat", e.a0_hat}, {"d_hat", {e.d_hat.x, e.d_hat.y}}, {"f_fixed", e.f_fixed}};
}

inline ModelEstimate estimate_from_json(const nlohmann::json& j) {
  ModelEstimate e;
  e.a0_hat = j.at("a0_hat").get<double>();
  e.d_hat = {j.at("d_hat").at(0).get<double>(), j.at("d_hat").at(1).get<double>()};
  e.f_fixed = j.at("f_fixed").get<double>();
  e.validate();
  return e;
}

/// Learned model (estimate and both GPs) for replay by `track`.
inline nlohmann::json artifacts_to_json(const LearningArtifacts& a) {
  return {{"estimate", estimate_to_json(a.estimate)}, {"gp_x", gp_to_json(a.gp_x)}, {"gp_y", gp_to_json(a.gp_y)}};
}

inline LearningArtifacts artifacts_from_json(const nlohmann::json& j) {
  LearningArtifacts a;
  a.estimate = estimate_from_json(j.at("estimate"));
  a.gp_x = gp_from_json(j.at("gp_x"));
  a.gp_y = gp_from_json(j.at("gp_y"));
  return a;
}

inline nlohmann::json metric_entry(double baseline, double corrected, double pct) {
  return {{"baseline", baseline}, {"corrected", corrected}, {"improvement_pct", pct}};
}

inline nlohmann::json report_to_json(const MetricsReport& r, const ExperimentConfig& cfg) {
  const auto& b = r.baseline;
  const auto& c = r.corrected;
  const auto& p = r.improvement_pct;
  return {{"final_position_error", metric_entry(b.final_position_error, c.final_position_error, p.final_position_error)},
          {"median_vx_error", metric_entry(b.median_vx_error, c.median_vx_error, p.median_vx_error)},
          {"median_vy_error", metric_entry(b.median_vy_error, c.median_vy_error, p.median_vy_error)},
          {"drift_final_x", metric_entry(b.drift_final_x, c.drift_final_x, p.drift_final_x)},
          {"drift_final_y", metric_entry(b.drift_final_y, c.drift_final_y, p.drift_final_y)},
          {"config_hash", config_hash(cfg)},
          {"seed", cfg.rng_seed}};
}

inline nlohmann::json spread_to_json(const Spread& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

/// Monte-Carlo summary. Each metric's baseline/corrected/improvement_pct
/// are trial means; the spread and win count sit alongside.
inline nlohmann::json monte_carlo_to_json(const MonteCarloSummary& s, const ExperimentConfig& cfg) {
  auto entry = [](const MetricAggregate& a) {
    nlohmann::json j = metric_entry(a.baseline.mean, a.corrected.mean, a.improvement_pct.mean);
    j["improvement_spread"] = spread_to_json(a.improvement_pct);
    j["wins"] = a.wins;
    return j;
  };
  return {{"final_position_error", entry(s.final_position_error)},
          {"median_vx_error", entry(s.median_vx_error)},
          {"median_vy_error", entry(s.median_vy_error)},
          {"drift_final_x", entry(s.drift_final_x)},
          {"drift_final_y", entry(s.drift_final_y)},
          {"n_trials", s.trials.size()},
          {"config_hash", config_hash(cfg)},
          {"seed", cfg.rng_seed}};
}

inline void write_monte_carlo_csv(std::ostream& os, const MonteCarloSummary& s) {
  os << "trial,fpe_baseline,fpe_corrected,mvx_baseline,mvx_corrected,mvy_baseline,mvy_corrected,"
        "driftx_baseline,driftx_corrected,drifty_baseline,drifty_corrected\n";
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    const auto& b = s.trials[i].baseline;
    const auto& c = s.trials[i].corrected;
    os << i;
    for (double v : {b.final_position_error, c.final_position_error, b.median_vx_error, c.median_vx_error,
                     b.median_vy_error, c.median_vy_error, b.drift_final_x, c.drift_final_x, b.drift_final_y,
                     c.drift_final_y})
      os << ',' << format_sig9(v);
    os << '\n';
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace mbot
