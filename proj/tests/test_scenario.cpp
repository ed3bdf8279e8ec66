#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "roundabout/scenario.hpp"
#include "support.hpp"

using namespace roundabout;

namespace {

const RoundaboutMap& default_map() {
  static const RoundaboutMap map = build_roundabout(GeometryConfig{});
  return map;
}

// Closed-form length of the sampled path: two straight lanes plus the ring
// arc drawn as n equal chords.
double expected_length(int entry, int exit) {
  const double R = 14, w = 4, L = 25, rc = R - w / 2, half = w / 2;
  const double a_merge = std::sqrt(rc * rc - half * half);
  const double offset = std::atan2(half, a_merge);
  const double anchors[3] = {90, 210, 330};
  double gap = std::fmod(anchors[exit] - anchors[entry] + 360.0, 360.0);
  if (gap == 0) gap = 360;
  const double sweep = gap * std::numbers::pi / 180 - 2 * offset;
  const double n = std::ceil(rc * sweep / 0.5);
  const double chords = 2 * rc * n * std::sin(sweep / (2 * n));
  return 2 * ((R + L) - a_merge) + chords;
}

}  // namespace

TEST(BuildRoundabout, DefaultHasThreeLegs) {
  const auto& map = default_map();
  EXPECT_EQ(map.legs().size(), 3u);
  EXPECT_DOUBLE_EQ(map.inner_radius(), 10.0);
  EXPECT_DOUBLE_EQ(map.centerline_radius(), 12.0);
  EXPECT_FALSE(map.is_navigable(map.center()));
  EXPECT_TRUE(map.is_navigable({12.0, 0.0}));
  EXPECT_TRUE(map.is_navigable({0.0, 30.0}));
  EXPECT_FALSE(map.is_navigable({0.0, 40.0}));
}

TEST(BuildRoundabout, RejectsBadDimensions) {
  GeometryConfig g;
  g.lane_width = 0;
  EXPECT_THROW(build_roundabout(g), std::invalid_argument);
  g = {};
  g.ring_radius = 3.5;
  EXPECT_THROW(build_roundabout(g), std::invalid_argument);
  g = {};
  g.legs.pop_back();
  EXPECT_THROW(build_roundabout(g), std::invalid_argument);
  g = {};
  g.legs.push_back({45, 25});
  EXPECT_THROW(build_roundabout(g), std::invalid_argument);
  g = {};
  g.legs[1].length = -1;
  EXPECT_THROW(build_roundabout(g), std::invalid_argument);
}

TEST(BuildRoundabout, NavigableAreaMatchesAnnulusPlusLegs) {
  const auto& map = default_map();
  prop::Gen gen(3);
  int hits = 0;
  const int n = 200000;
  const double extent = 40;
  for (int i = 0; i < n; ++i) hits += map.is_navigable(gen.point(extent));
  const double estimate = hits * (2 * extent) * (2 * extent) / n;
  // annulus + 3 legs of (rc .. R+L) x 2w, minus the leg parts already inside the annulus (small)
  const double annulus = std::numbers::pi * (14.0 * 14.0 - 10.0 * 10.0);
  EXPECT_GT(estimate, annulus);
  EXPECT_LT(estimate, annulus + 3 * (39.0 - 12.0) * 8.0 + 1.0);
}

TEST(PathFor, AdjacentExitMatchesClosedForm) {
  for (int e = 0; e < 3; ++e) {
    for (int x = 0; x < 3; ++x) {
      const PathSpec p = path_for(default_map(), e, x, 0.5);
      EXPECT_NEAR(p.total_length, expected_length(e, x), 1e-9) << e << "->" << x;
    }
  }
  // leg_in + 2 pi rc 120/360 + leg_out with 25 m legs
  const PathSpec p = path_for(default_map(), 0, 1, 0.5);
  EXPECT_NEAR(p.total_length, 25 + 2 * std::numbers::pi * 12 / 3 + 25, 0.5);
}

TEST(PathFor, SameEntryAndExitLoopsTheRing) {
  const PathSpec p = path_for(default_map(), 2, 2, 0.5);
  EXPECT_GT(p.total_length, 2 * std::numbers::pi * 12);
  const double offset = std::atan2(2.0, std::sqrt(140.0));
  EXPECT_NEAR(p.diverge_s - p.merge_s, 12 * (2 * std::numbers::pi - 2 * offset), 0.01);
}

TEST(PathFor, StructuralInvariants) {
  for (int e = 0; e < 3; ++e) {
    for (int x = 0; x < 3; ++x) {
      const PathSpec p = path_for(default_map(), e, x, 0.5);
      ASSERT_EQ(p.points.size(), p.cum_length.size());
      EXPECT_EQ(p.cum_length.front(), 0.0);
      EXPECT_EQ(p.cum_length.back(), p.total_length);
      for (std::size_t i = 1; i < p.points.size(); ++i) {
        EXPECT_GT(p.cum_length[i], p.cum_length[i - 1]);
        EXPECT_LE(norm(p.points[i] - p.points[i - 1]), 0.5 + 1e-12);
      }
      for (const Vec2& q : p.points) EXPECT_TRUE(default_map().is_navigable(q));
      EXPECT_GT(p.merge_s, 0.0);
      EXPECT_LT(p.merge_s, p.diverge_s);
      EXPECT_LT(p.diverge_s, p.total_length);
      // counterclockwise on the ring
      for (std::size_t i = 1; i < p.points.size(); ++i) {
        if (p.cum_length[i] <= p.merge_s || p.cum_length[i] > p.diverge_s) continue;
        EXPECT_GT(cross(p.points[i - 1], p.points[i]), 0.0);
      }
    }
  }
}

TEST(PathFor, RejectsBadIds) {
  EXPECT_THROW(path_for(default_map(), 3, 0, 0.5), std::invalid_argument);
  EXPECT_THROW(path_for(default_map(), 0, -1, 0.5), std::invalid_argument);
  EXPECT_THROW(path_for(default_map(), 0, 1, 0.0), std::invalid_argument);
}

TEST(ArcPoint, EndpointsAndVertices) {
  const PathSpec p = path_for(default_map(), 0, 1, 0.5);
  EXPECT_EQ(arc_point(p, 0.0).position, p.points.front());
  EXPECT_EQ(arc_point(p, p.total_length).position, p.points.back());
  for (std::size_t i = 0; i < p.points.size(); ++i) EXPECT_EQ(arc_point(p, p.cum_length[i]).position, p.points[i]);
  // outgoing-segment heading at a vertex
  const std::size_t k = 10;
  const Vec2 d = p.points[k + 1] - p.points[k];
  EXPECT_DOUBLE_EQ(arc_point(p, p.cum_length[k]).heading, std::atan2(d.y, d.x));
}

TEST(ArcPoint, InterpolatesLinearly) {
  const PathSpec p = path_for(default_map(), 1, 2, 0.5);
  const std::size_t k = 40;
  const double s = 0.25 * p.cum_length[k] + 0.75 * p.cum_length[k + 1];
  const Vec2 q = arc_point(p, s).position;
  const Vec2 expect = p.points[k] * 0.25 + p.points[k + 1] * 0.75;
  EXPECT_NEAR(q.x, expect.x, 1e-12);
  EXPECT_NEAR(q.y, expect.y, 1e-12);
}

TEST(ArcPoint, OutOfRangeThrows) {
  const PathSpec p = path_for(default_map(), 0, 2, 0.5);
  EXPECT_THROW(arc_point(p, -1e-9), std::out_of_range);
  EXPECT_THROW(arc_point(p, p.total_length + 1e-9), std::out_of_range);
}
