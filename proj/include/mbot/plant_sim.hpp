#pragma once

// Disturbed unicycle model of a magnetically actuated rolling microrobot.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mbot/vec2.hpp"

namespace mbot {

/// Heading `alpha`, rolling frequency `f` (Hz) and fixed attitude `gamma`.
struct ControlInput {
  double alpha = 0.0;
  double f = 0.0;
  double gamma = 0.0;

  [[nodiscard]] bool valid() const {
    constexpr double pi = std::numbers::pi;
    return std::isfinite(alpha) && std::isfinite(gamma) && std::isfinite(f) && f >= 0.0 &&
           alpha >= -pi && alpha <= pi && gamma >= -pi && gamma <= pi;
  }
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Normalized rotating magnetic field direction.
struct FieldVector {
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;

  [[nodiscard]] double norm() const { return std::sqrt(bx * bx + by * by + bz * bz); }
};

struct PlantConfig {
  double a0_true = 0.6;             // effective radius, microns
  Vec2 d_bias{0.5, -0.3};           // mean disturbance, microns/s
  double noise_sigma = 0.25;        // per-axis std of the white disturbance, microns/s
  double dt = 1.0 / 30.0;           // s
  bool mismatch_enabled = true;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(a0_true > 0.0) || !std::isfinite(a0_true))
      throw std::invalid_argument("plant: a0_true must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw std::invalid_argument("plant: noise_sigma must be non-negative");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("plant: dt must be positive");
    if (!d_bias.finite()) throw std::invalid_argument("plant: d_bias must be finite");
  }
};

struct PlantState {
  Vec2 p;
  double t = 0.0;
};

/// Field vector commanded by `ctrl` at time `t`. Always unit norm.
inline FieldVector field_vector(const ControlInput& ctrl, double t) {
  const double phase = 2.0 * std::numbers::pi * ctrl.f * t;
  const double cp = std::cos(phase), sp = std::sin(phase);
  const double ca = std::cos(ctrl.alpha), sa = std::sin(ctrl.alpha);
  const double cg = std::cos(ctrl.gamma), sg = std::sin(ctrl.gamma);
  return {cg * ca * cp + sa * sp, -cg * sa * cp + ca * sp, sg * cp};
}

/// Draws the generalized disturbance D(t). Depends only on the config and
/// the random stream, never on the robot state.
template <class Rng>
Vec2 draw_disturbance(const PlantConfig& cfg, Rng& rng) {
  if (!cfg.mismatch_enabled) return {};
  // Two standard normals are always consumed so that the stream advances
  // identically regardless of sigma.
  std::normal_distribution<double> normal(0.0, 1.0);
  const double zx = normal(rng);
  const double zy = normal(rng);
  return cfg.d_bias + Vec2{zx, zy} * cfg.noise_sigma;
}

/// Velocity produced by `ctrl` under disturbance `d`.
inline Vec2 plant_velocity(const ControlInput& ctrl, const PlantConfig& cfg, const Vec2& d) {
  return heading_vector(ctrl.alpha) * (cfg.a0_true * ctrl.f) + d;
}

/// One forward-Euler step of the disturbed unicycle.
template <class Rng>
PlantState step(const PlantState& state, const ControlInput& ctrl, const PlantConfig& cfg, Rng& rng) {
  const Vec2 v = plant_velocity(ctrl, cfg, draw_disturbance(cfg, rng));
  return {state.p + v * cfg.dt, state.t + cfg.dt};
}

/// Owns a plant state together with its private random stream.
class Plant {
 public:
  explicit Plant(PlantConfig cfg, PlantState initial = {})
      : cfg_(cfg), state_(initial), rng_(cfg.rng_seed) {
    cfg_.validate();
  }

  /// Advances one step and returns the velocity realized over it.
  Vec2 advance(const ControlInput& ctrl) {
    const Vec2 v = plant_velocity(ctrl, cfg_, draw_disturbance(cfg_, rng_));
    state_ = {state_.p + v * cfg_.dt, state_.t + cfg_.dt};
    return v;
  }

  [[nodiscard]] const PlantState& state() const { return state_; }
  [[nodiscard]] const PlantConfig& config() const { return cfg_; }

 private:
  PlantConfig cfg_;
  PlantState state_;
  std::mt19937_64 rng_;
};

/// Realized velocity when a command computed from the estimated model
/// (a0_hat, d_hat) to achieve `v_d` is applied to the true model (a0_true, d_true).
inline Vec2 realized_velocity_oracle(const Vec2& v_d, double a0_true, double a0_hat, const Vec2& d_true,
                                     const Vec2& d_hat) {
  if (!(a0_hat > 0.0)) throw std::invalid_argument("realized_velocity_oracle: a0_hat must be positive");
  const double ratio = a0_true / a0_hat;
  return ratio * v_d + d_true - ratio * d_hat;
}

/// Closed-form velocity error v - v_d for the same setting.
inline Vec2 velocity_error_closed_form(const Vec2& v_d, double a0_true, double a0_hat, const Vec2& d_true,
                                      const Vec2& d_hat) {
  if (!(a0_hat > 0.0)) throw std::invalid_argument("velocity_error_closed_form: a0_hat must be positive");
  const double ratio = a0_true / a0_hat;
  return v_d * (ratio - 1.0) + d_true - ratio * d_hat;
}

}  // namespace mbot
