#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace roundabout {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit_from_angle(double rad) { return {std::cos(rad), std::sin(rad)}; }
/// Counterclockwise perpendicular.
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

inline double wrap_two_pi(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  return a;
}

/// Position plus heading (radians, counterclockwise from +x).
struct Pose {
  Vec2 position;
  double heading = 0.0;
};

/// Oriented rectangle given by center, heading of the long axis and full extents.
struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;   // across heading

  Vec2 axis_u() const { return unit_from_angle(heading); }
  Vec2 axis_v() const { return perp(axis_u()); }

  std::array<Vec2, 4> corners() const {
    const Vec2 u = axis_u() * (0.5 * length);
    const Vec2 v = axis_v() * (0.5 * width);
    return {center + u + v, center - u + v, center - u - v, center + u - v};
  }

  /// Closed containment (boundary counts as inside).
  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    return std::abs(dot(d, axis_u())) <= 0.5 * length && std::abs(dot(d, axis_v())) <= 0.5 * width;
  }
};

/// Signed overlap of the two rectangles' projections on every separating axis
/// candidate; the minimum over axes. Positive iff interiors intersect.
inline double penetration_depth(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{a.axis_u(), a.axis_v(), b.axis_u(), b.axis_v()};
  double depth = std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double amin = inf, amax = -inf, bmin = inf, bmax = -inf;
    for (const Vec2& p : ca) {
      const double t = dot(p, axis);
      amin = std::min(amin, t);
      amax = std::max(amax, t);
    }
    for (const Vec2& p : cb) {
      const double t = dot(p, axis);
      bmin = std::min(bmin, t);
      bmax = std::max(bmax, t);
    }
    depth = std::min(depth, std::min(amax - bmin, bmax - amin));
  }
  return depth;
}

/// Separating-axis overlap test. Touching at zero area is not an overlap.
inline bool overlaps(const OrientedRect& a, const OrientedRect& b) { return penetration_depth(a, b) > 0.0; }

/// Distance from p to the segment [a, b].
inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + ab * t));
}

}  // namespace roundabout
