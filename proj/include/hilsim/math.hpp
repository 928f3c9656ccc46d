#pragma once

#include <cmath>
#include <numbers>

namespace hil {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Wraps an angle to [-pi, pi).
inline double wrap_pi(double angle) {
  double r = angle - kTwoPi * std::floor((angle + kPi) / kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  if (r < -kPi) r = -kPi;
  return r;
}

/// Wraps an angle in degrees to [0, 360).
inline double wrap_360(double deg) {
  double r = deg - 360.0 * std::floor(deg / 360.0);
  if (r >= 360.0) r = 0.0;
  return r;
}

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// North-East-Down position in metres relative to a geodetic origin.
struct Ned {
  double north = 0.0;
  double east = 0.0;
  double down = 0.0;

  constexpr bool operator==(const Ned&) const = default;
  double horizontal_distance_to(const Ned& o) const {
    return std::hypot(o.north - north, o.east - east);
  }
};

}  // namespace hil
