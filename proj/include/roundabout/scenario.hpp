#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "roundabout/geometry.hpp"

namespace roundabout {

struct LegConfig {
  double angle_deg = 0.0;  // anchor angle on the ring, counterclockwise from +x
  double length = 25.0;    // m, measured outward from the ring's outer edge
};

struct GeometryConfig {
  Vec2 center{0.0, 0.0};
  double ring_radius = 14.0;  // outer edge of the driving ring
  double lane_width = 4.0;
  std::vector<LegConfig> legs{{90.0, 25.0}, {210.0, 25.0}, {330.0, 25.0}};
  double sample_step = 0.5;   // polyline spacing for paths
};

struct Leg {
  double angle = 0.0;  // rad
  double length = 0.0;
  Vec2 outward;        // unit vector from ring center along the leg
  Vec2 lateral;        // perp(outward); entry lane sits on the +lateral side
  std::array<Vec2, 4> polygon;
};

/// Single-lane roundabout with three two-lane legs. Traffic circulates
/// counterclockwise; legs carry the entry lane on their +lateral half.
class RoundaboutMap {
 public:
  static constexpr std::size_t kLegCount = 3;

  RoundaboutMap(Vec2 center, double ring_radius, double lane_width, std::array<Leg, kLegCount> legs);

  Vec2 center() const { return center_; }
  double ring_radius() const { return ring_radius_; }
  double inner_radius() const { return ring_radius_ - lane_width_; }
  /// Radius of the driving-lane centerline.
  double centerline_radius() const { return ring_radius_ - 0.5 * lane_width_; }
  double lane_width() const { return lane_width_; }
  const std::array<Leg, kLegCount>& legs() const { return legs_; }
  /// Leg rectangles as closed polygons; the ring annulus is tested analytically.
  std::vector<std::array<Vec2, 4>> navigable_polygons() const;

  bool is_navigable(Vec2 p) const;
  /// Conservative axis-aligned bounds of the navigable region.
  void bounds(Vec2& lo, Vec2& hi) const;

 private:
  Vec2 center_;
  double ring_radius_;
  double lane_width_;
  std::array<Leg, kLegCount> legs_;
};

/// Throws std::invalid_argument unless ring_radius > lane_width > 0, every leg
/// length is positive and there are exactly three legs.
RoundaboutMap build_roundabout(const GeometryConfig& config);

/// Arc-length parameterized polyline from an entry lane, counterclockwise
/// around the ring, out through an exit lane.
struct PathSpec {
  int entry_id = 0;
  int exit_id = 0;
  std::vector<Vec2> points;
  std::vector<double> cum_length;
  double total_length = 0.0;
  double merge_s = 0.0;    // arc position where the entry lane joins the ring
  double diverge_s = 0.0;  // arc position where the path leaves the ring
};

PathSpec path_for(const RoundaboutMap& map, int entry_id, int exit_id, double sample_step);

/// Linear interpolation along the polyline. At a vertex the heading is that of
/// the outgoing segment; at total_length it is that of the last segment.
Pose arc_point(const PathSpec& path, double s);

/// Index i of the segment [points[i], points[i+1]] that contains s.
std::size_t segment_at(const PathSpec& path, double s);

}  // namespace roundabout
