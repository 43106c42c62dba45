#pragma once

#include <cmath>
#include <numbers>

namespace mbot {

/// Planar vector. Positions are in microns, velocities in microns/s.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator/(const Vec2& a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;

  [[nodiscard]] constexpr double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  [[nodiscard]] constexpr double squared_norm() const { return x * x + y * y; }
  [[nodiscard]] double norm() const { return std::hypot(x, y); }
  [[nodiscard]] bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

/// Unit vector pointing along `angle`.
inline Vec2 heading_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps an angle into (-pi, pi]. The boundary value -pi maps to pi.
inline double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  if (angle > -pi && angle <= pi) return angle;
  double wrapped = std::remainder(angle, 2.0 * pi);
  if (wrapped <= -pi) wrapped += 2.0 * pi;
  return wrapped;
}

/// Smallest signed difference a - b, wrapped into (-pi, pi].
inline double angle_difference(double a, double b) { return wrap_angle(a - b); }

}  // namespace mbot
