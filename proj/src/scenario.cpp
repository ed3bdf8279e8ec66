#include "roundabout/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace roundabout {

RoundaboutMap::RoundaboutMap(Vec2 center, double ring_radius, double lane_width, std::array<Leg, kLegCount> legs)
    : center_(center), ring_radius_(ring_radius), lane_width_(lane_width), legs_(legs) {}

std::vector<std::array<Vec2, 4>> RoundaboutMap::navigable_polygons() const {
  std::vector<std::array<Vec2, 4>> out;
  out.reserve(legs_.size());
  for (const Leg& leg : legs_) out.push_back(leg.polygon);
  return out;
}

bool RoundaboutMap::is_navigable(Vec2 p) const {
  const Vec2 d = p - center_;
  const double r2 = dot(d, d);
  const double r_in = inner_radius();
  if (r2 >= r_in * r_in && r2 <= ring_radius_ * ring_radius_) return true;
  const double a_lo = centerline_radius();
  for (const Leg& leg : legs_) {
    const double a = dot(d, leg.outward);
    const double l = dot(d, leg.lateral);
    if (a >= a_lo && a <= ring_radius_ + leg.length && std::abs(l) <= lane_width_) return true;
  }
  return false;
}

void RoundaboutMap::bounds(Vec2& lo, Vec2& hi) const {
  lo = center_ - Vec2{ring_radius_, ring_radius_};
  hi = center_ + Vec2{ring_radius_, ring_radius_};
  for (const Leg& leg : legs_) {
    for (const Vec2& c : leg.polygon) {
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y)};
    }
  }
}

RoundaboutMap build_roundabout(const GeometryConfig& config) {
  if (!(config.lane_width > 0.0)) throw std::invalid_argument("lane_width must be positive");
  if (!(config.ring_radius > config.lane_width))
    throw std::invalid_argument("ring_radius must exceed lane_width");
  if (config.legs.size() != RoundaboutMap::kLegCount)
    throw std::invalid_argument("roundabout needs exactly 3 legs, got " + std::to_string(config.legs.size()));
  if (!(config.sample_step > 0.0)) throw std::invalid_argument("sample_step must be positive");

  std::array<Leg, RoundaboutMap::kLegCount> legs{};
  const double a_lo = config.ring_radius - 0.5 * config.lane_width;
  for (std::size_t i = 0; i < legs.size(); ++i) {
    const LegConfig& lc = config.legs[i];
    if (!(lc.length > 0.0)) throw std::invalid_argument("leg length must be positive");
    Leg& leg = legs[i];
    leg.angle = wrap_two_pi(lc.angle_deg * std::numbers::pi / 180.0);
    leg.length = lc.length;
    leg.outward = unit_from_angle(leg.angle);
    leg.lateral = perp(leg.outward);
    const double a_hi = config.ring_radius + lc.length;
    const Vec2 lat = leg.lateral * config.lane_width;
    leg.polygon = {config.center + leg.outward * a_lo - lat, config.center + leg.outward * a_hi - lat,
                   config.center + leg.outward * a_hi + lat, config.center + leg.outward * a_lo + lat};
  }
  for (std::size_t i = 0; i < legs.size(); ++i) {
    for (std::size_t j = i + 1; j < legs.size(); ++j) {
      if (std::abs(legs[i].angle - legs[j].angle) < 1e-9)
        throw std::invalid_argument("leg anchor angles must be distinct");
    }
  }
  return RoundaboutMap(config.center, config.ring_radius, config.lane_width, legs);
}

namespace {

void append_segment(std::vector<Vec2>& pts, Vec2 from, Vec2 to, double step) {
  const double len = norm(to - from);
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / step)));
  for (std::size_t k = 1; k <= n; ++k) {
    pts.push_back(k == n ? to : from + (to - from) * (static_cast<double>(k) / static_cast<double>(n)));
  }
}

}  // namespace

PathSpec path_for(const RoundaboutMap& map, int entry_id, int exit_id, double sample_step) {
  if (entry_id < 0 || entry_id > 2 || exit_id < 0 || exit_id > 2)
    throw std::invalid_argument("entry_id and exit_id must be in {0,1,2}");
  if (!(sample_step > 0.0)) throw std::invalid_argument("sample_step must be positive");

  const Leg& in = map.legs()[static_cast<std::size_t>(entry_id)];
  const Leg& out = map.legs()[static_cast<std::size_t>(exit_id)];
  const double half = 0.5 * map.lane_width();
  const double rc = map.centerline_radius();
  const double a_merge = std::sqrt(rc * rc - half * half);
  const double offset = std::atan2(half, a_merge);
  const Vec2 c = map.center();

  const Vec2 start = c + in.outward * (map.ring_radius() + in.length) + in.lateral * half;
  const Vec2 merge = c + in.outward * a_merge + in.lateral * half;
  const Vec2 diverge = c + out.outward * a_merge - out.lateral * half;
  const Vec2 finish = c + out.outward * (map.ring_radius() + out.length) - out.lateral * half;

  const double theta_in = in.angle + offset;
  double sweep = wrap_two_pi(out.angle - offset - theta_in);
  if (sweep <= 0.0) sweep += 2.0 * std::numbers::pi;

  PathSpec path;
  path.entry_id = entry_id;
  path.exit_id = exit_id;
  path.points.push_back(start);
  append_segment(path.points, start, merge, sample_step);
  const std::size_t merge_index = path.points.size() - 1;

  const auto arc_n = static_cast<std::size_t>(std::max(1.0, std::ceil(rc * sweep / sample_step)));
  for (std::size_t k = 1; k <= arc_n; ++k) {
    if (k == arc_n) {
      path.points.push_back(diverge);
    } else {
      const double th = theta_in + sweep * static_cast<double>(k) / static_cast<double>(arc_n);
      path.points.push_back(c + unit_from_angle(th) * rc);
    }
  }
  const std::size_t diverge_index = path.points.size() - 1;
  append_segment(path.points, diverge, finish, sample_step);

  path.cum_length.resize(path.points.size());
  path.cum_length[0] = 0.0;
  for (std::size_t i = 1; i < path.points.size(); ++i)
    path.cum_length[i] = path.cum_length[i - 1] + norm(path.points[i] - path.points[i - 1]);
  path.total_length = path.cum_length.back();
  path.merge_s = path.cum_length[merge_index];
  path.diverge_s = path.cum_length[diverge_index];
  return path;
}

std::size_t segment_at(const PathSpec& path, double s) {
  const auto it = std::upper_bound(path.cum_length.begin(), path.cum_length.end(), s);
  auto i = static_cast<std::size_t>(std::distance(path.cum_length.begin(), it));
  i = i == 0 ? 0 : i - 1;
  return std::min(i, path.points.size() - 2);
}

Pose arc_point(const PathSpec& path, double s) {
  if (path.points.size() < 2) throw std::invalid_argument("path needs at least two points");
  if (!(s >= 0.0 && s <= path.total_length))
    throw std::out_of_range("arc position " + std::to_string(s) + " outside [0, " +
                            std::to_string(path.total_length) + "]");
  const std::size_t i = segment_at(path, s);
  const Vec2 a = path.points[i];
  const Vec2 b = path.points[i + 1];
  const Vec2 d = b - a;
  const double heading = std::atan2(d.y, d.x);
  if (s == path.total_length) return {path.points.back(), heading};
  const double t = (s - path.cum_length[i]) / (path.cum_length[i + 1] - path.cum_length[i]);
  return {a + d * t, heading};
}

}  // namespace roundabout
