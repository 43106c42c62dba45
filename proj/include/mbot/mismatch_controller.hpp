#pragma once

// Heading selection: model inversion (baseline) and GP-corrected
// least-squares heading search (corrected).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mbot/gp_regress.hpp"
#include "mbot/vec2.hpp"

namespace mbot {

/// Approximate model used by the controller.
struct ModelEstimate {
  double a0_hat = 0.5;  // microns
  Vec2 d_hat;           // microns/s
  double f_fixed = 1.0; // Hz

  void validate() const {
    if (!(a0_hat > 0.0) || !std::isfinite(a0_hat)) throw std::invalid_argument("estimate: a0_hat must be positive");
    if (!(f_fixed > 0.0) || !std::isfinite(f_fixed)) throw std::invalid_argument("estimate: f_fixed must be positive");
    if (!d_hat.finite()) throw std::invalid_argument("estimate: d_hat must be finite");
  }
  friend bool operator==(const ModelEstimate&, const ModelEstimate&) = default;
};

/// The desired velocity coincides with the estimated disturbance, so no
/// heading is defined. Callers hold the previous heading with f = 0.
class DegenerateHeading : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct InverseCommand {
  double alpha = 0.0;  // (-pi, pi]
  double f = 0.0;      // Hz
};

inline InverseCommand invert_model(const Vec2& v_d, const ModelEstimate& est) {
  const Vec2 w = v_d - est.d_hat;
  const double speed = w.norm();
  if (!(speed > 0.0)) throw DegenerateHeading("invert_model: desired velocity equals the disturbance estimate");
  return {wrap_angle(std::atan2(w.y, w.x)), speed / est.a0_hat};
}

/// Uncorrected heading: the inverted approximate model alone.
inline double baseline_heading(const Vec2& v_d, const ModelEstimate& est) { return invert_model(v_d, est).alpha; }

/// Velocity predicted for heading `alpha`: nominal model + d_hat + GP mean.
inline Vec2 predicted_velocity(double alpha, const ModelEstimate& est, const GPModel& gp_x, const GPModel& gp_y) {
  return heading_vector(alpha) * (est.a0_hat * est.f_fixed) + est.d_hat +
         Vec2{gp_x.predict_mean(alpha), gp_y.predict_mean(alpha)};
}

/// Squared velocity gap ||v(alpha) - v_d||^2.
inline double objective(double alpha, const Vec2& v_d, const ModelEstimate& est, const GPModel& gp_x,
                        const GPModel& gp_y) {
  return (predicted_velocity(alpha, est, gp_x, gp_y) - v_d).squared_norm();
}

/// Same cost after expanding the square and using cos^2 + sin^2 = 1:
/// (a f)^2 + ||r||^2 + 2 a f r . [cos, sin], with r = mu + d_hat - v_d.
inline double objective_expanded(double alpha, const Vec2& v_d, const ModelEstimate& est, const GPModel& gp_x,
                                 const GPModel& gp_y) {
  const double af = est.a0_hat * est.f_fixed;
  const Vec2 r = Vec2{gp_x.predict_mean(alpha), gp_y.predict_mean(alpha)} + est.d_hat - v_d;
  return af * af + r.squared_norm() + 2.0 * af * r.dot(heading_vector(alpha));
}

struct HeadingSolution {
  double alpha_star = 0.0;
  double objective_value = 0.0;
  Vec2 predicted_velocity;
};

struct SolverOptions {
  int grid_points = 720;
  double tolerance = 1e-6;  // golden-section bracket width, radians
};

/// Global heading search: a uniform scan of the circle followed by
/// golden-section refinement around the lowest grid minima.
/// GP means on the grid are cached at construction, so one solver can be
/// reused across many desired velocities.
class HeadingSolver {
 public:
  HeadingSolver(const ModelEstimate& est, const GPModel& gp_x, const GPModel& gp_y, SolverOptions options = {})
      : est_(est), gp_x_(gp_x), gp_y_(gp_y), opt_(options) {
    est_.validate();
    if (opt_.grid_points < 3) throw std::invalid_argument("solver: need at least 3 grid points");
    if (!(opt_.tolerance > 0.0)) throw std::invalid_argument("solver: tolerance must be positive");
    const auto n = static_cast<std::size_t>(opt_.grid_points);
    grid_.resize(n);
    base_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      grid_[i] = grid_angle(i);
      base_[i] = heading_vector(grid_[i]) * (est_.a0_hat * est_.f_fixed) + est_.d_hat +
                 Vec2{gp_x_.predict_mean(grid_[i]), gp_y_.predict_mean(grid_[i])};
    }
  }

  [[nodiscard]] const std::vector<double>& grid() const { return grid_; }

  [[nodiscard]] double cost(double alpha, const Vec2& v_d) const {
    return objective(wrap_angle(alpha), v_d, est_, gp_x_, gp_y_);
  }

  [[nodiscard]] HeadingSolution solve(const Vec2& v_d) const {
    const std::size_t n = grid_.size();
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = (base_[i] - v_d).squared_norm();

    // Grid local minima (circular), lowest first. Near-tied basins can be
    // misranked by the grid, so the best few are all refined.
    std::vector<std::size_t> minima;
    for (std::size_t i = 0; i < n; ++i)
      if (c[i] <= c[(i + n - 1) % n] && c[i] <= c[(i + 1) % n]) minima.push_back(i);
    std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
    if (minima.size() > kRefinedBasins) minima.resize(kRefinedBasins);

    const std::size_t best = std::min_element(c.begin(), c.end()) - c.begin();
    double alpha = grid_[best];
    double value = cost(alpha, v_d);
    for (std::size_t i : minima) {
      const auto [a, f] = refine(i, v_d);
      if (f < value) {
        alpha = a;
        value = f;
      }
    }
    return {alpha, value, predicted_velocity(alpha, est_, gp_x_, gp_y_)};
  }

 private:
  static constexpr std::size_t kRefinedBasins = 4;

  // Golden section over the cells either side of grid point i, then a
  // parabolic polish through the final bracket.
  [[nodiscard]] std::pair<double, double> refine(std::size_t i, const Vec2& v_d) const {
    const double cell = 2.0 * std::numbers::pi / static_cast<double>(grid_.size());
    // Unwrapped bracket; the domain is treated as circular.
    double lo = grid_[i] - cell, hi = grid_[i] + cell;
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = cost(x1, v_d), f2 = cost(x2, v_d);
    while (hi - lo > opt_.tolerance) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = cost(x1, v_d);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = cost(x2, v_d);
      }
    }
    double alpha = f1 <= f2 ? x1 : x2;
    double value = std::min(f1, f2);

    const double mid = 0.5 * (lo + hi);
    const double fl = cost(lo, v_d), fm = cost(mid, v_d), fh = cost(hi, v_d);
    const double denom = fl - 2.0 * fm + fh;
    if (denom > 0.0) {
      const double vertex = mid + 0.5 * (hi - lo) * 0.5 * (fl - fh) / denom;
      if (vertex >= lo && vertex <= hi) {
        const double fv = cost(vertex, v_d);
        if (fv < value) {
          alpha = vertex;
          value = fv;
        }
      }
    }
    alpha = wrap_angle(alpha);
    return {alpha, cost(alpha, v_d)};
  }

  [[nodiscard]] double grid_angle(std::size_t i) const {
    return wrap_angle(-std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(i) /
                                              static_cast<double>(opt_.grid_points));
  }

  ModelEstimate est_;
  GPModel gp_x_;
  GPModel gp_y_;
  SolverOptions opt_;
  std::vector<double> grid_;
  std::vector<Vec2> base_;
};

/// Minimizes the GP-corrected velocity gap over the heading circle.
inline HeadingSolution solve_heading(const Vec2& v_d, const ModelEstimate& est, const GPModel& gp_x,
                                     const GPModel& gp_y, SolverOptions options = {}) {
  return HeadingSolver(est, gp_x, gp_y, options).solve(v_d);
}

}  // namespace mbot
