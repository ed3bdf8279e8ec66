#include "roundabout/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "roundabout/kernels.hpp"

namespace roundabout {

namespace {

constexpr double kHalf = 0.5 * static_cast<double>(ViewLayers::kSize);
constexpr long kSizeL = static_cast<long>(ViewLayers::kSize);

struct Frame {
  Vec2 origin;
  Vec2 forward;
  Vec2 right;
};

Frame frame_of(const Pose& ego) {
  const Vec2 f = unit_from_angle(ego.heading);
  return {ego.position, f, Vec2{f.y, -f.x}};
}

/// Inclusive pixel index window [r0, r1] x [c0, c1] covering a world-space
/// point cloud, padded by one pixel and clipped to the image.
struct PixelBox {
  long r0 = 0, r1 = -1, c0 = 0, c1 = -1;
};

template <typename Points>
PixelBox pixel_box(const Frame& fr, const Points& pts, double pad_m) {
  double rmin = INFINITY, rmax = -INFINITY, cmin = INFINITY, cmax = -INFINITY;
  for (const Vec2& p : pts) {
    const Vec2 d = p - fr.origin;
    const double col = dot(d, fr.right) / ViewLayers::kMetersPerPixel + kHalf - 0.5;
    const double row = kHalf - 0.5 - dot(d, fr.forward) / ViewLayers::kMetersPerPixel;
    rmin = std::min(rmin, row);
    rmax = std::max(rmax, row);
    cmin = std::min(cmin, col);
    cmax = std::max(cmax, col);
  }
  const double pad = pad_m / ViewLayers::kMetersPerPixel + 1.0;
  PixelBox b;
  b.r0 = std::max(0L, static_cast<long>(std::floor(rmin - pad)));
  b.r1 = std::min(kSizeL - 1, static_cast<long>(std::ceil(rmax + pad)));
  b.c0 = std::max(0L, static_cast<long>(std::floor(cmin - pad)));
  b.c1 = std::min(kSizeL - 1, static_cast<long>(std::ceil(cmax + pad)));
  return b;
}

void validate(const RasterInputs& in) {
  if (in.map == nullptr || in.ego_path == nullptr) throw std::invalid_argument("rasterize_view: missing map or path");
}

}  // namespace

std::size_t ViewLayers::count(Layer l) const {
  const Grid& g = (*this)[l];
  return static_cast<std::size_t>(std::count(g.begin(), g.end(), std::uint8_t{1}));
}

namespace {

Vec2 center_in(const Frame& fr, std::size_t row, std::size_t col) {
  const double xr = (static_cast<double>(col) + 0.5 - kHalf) * ViewLayers::kMetersPerPixel;
  const double yu = (kHalf - static_cast<double>(row) - 0.5) * ViewLayers::kMetersPerPixel;
  return fr.origin + fr.right * xr + fr.forward * yu;
}

}  // namespace

Vec2 pixel_center(const Pose& ego, std::size_t row, std::size_t col) { return center_in(frame_of(ego), row, col); }

std::vector<Vec2> remaining_polyline(const PathSpec& path, double from_s) {
  from_s = std::clamp(from_s, 0.0, path.total_length);
  std::vector<Vec2> out;
  out.push_back(arc_point(path, from_s).position);
  for (std::size_t i = segment_at(path, from_s) + 1; i < path.points.size(); ++i) {
    if (path.cum_length[i] > from_s) out.push_back(path.points[i]);
  }
  if (out.size() == 1) out.push_back(out.front());
  return out;
}

namespace raster_detail {

bool on_path_band(Vec2 p, std::span<const Vec2> polyline, double half_width) {
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    if (distance_to_segment(p, polyline[i], polyline[i + 1]) <= half_width) return true;
  }
  return false;
}

ViewLayers rasterize_reference(const RasterInputs& in) {
  validate(in);
  ViewLayers out;
  const Frame fr = frame_of(in.ego);
  const auto poly = remaining_polyline(*in.ego_path, in.ego_s);
  const double half = 0.5 * in.map->lane_width();
  for (std::size_t r = 0; r < ViewLayers::kSize; ++r) {
    for (std::size_t c = 0; c < ViewLayers::kSize; ++c) {
      const Vec2 p = center_in(fr, r, c);
      const std::size_t idx = r * ViewLayers::kSize + c;
      const bool nav = in.map->is_navigable(p);
      out[Layer::Navigable][idx] = nav ? 1 : 0;
      bool obstacle = false;
      for (const OrientedRect& v : in.vehicles) obstacle = obstacle || v.contains(p);
      out[Layer::Obstacles][idx] = obstacle ? 1 : 0;
      out[Layer::Path][idx] = (nav && on_path_band(p, poly, half)) ? 1 : 0;
    }
  }
  return out;
}

ViewLayers rasterize_parallel(const RasterInputs& in) {
  validate(in);
  ViewLayers out;
  const Frame fr = frame_of(in.ego);
  const double half = 0.5 * in.map->lane_width();

  std::vector<PixelBox> vehicle_boxes;
  vehicle_boxes.reserve(in.vehicles.size());
  for (const OrientedRect& v : in.vehicles) vehicle_boxes.push_back(pixel_box(fr, v.corners(), 0.0));

  // Keep only path segments whose lane band can touch the window.
  const auto poly = remaining_polyline(*in.ego_path, in.ego_s);
  const double reach = 0.5 * ViewLayers::kWindow * std::numbers::sqrt2 + half;
  struct Segment {
    Vec2 a, b;
    PixelBox box;
  };
  std::vector<Segment> segments;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    if (distance_to_segment(in.ego.position, poly[i], poly[i + 1]) > reach) continue;
    const std::array<Vec2, 2> ends{poly[i], poly[i + 1]};
    PixelBox box = pixel_box(fr, ends, half);
    if (box.r0 > box.r1 || box.c0 > box.c1) continue;
    segments.push_back({poly[i], poly[i + 1], box});
  }

#pragma omp parallel for schedule(static)
  for (long rl = 0; rl < kSizeL; ++rl) {
    const auto r = static_cast<std::size_t>(rl);
    const std::size_t row_base = r * ViewLayers::kSize;
    for (std::size_t c = 0; c < ViewLayers::kSize; ++c) {
      out[Layer::Navigable][row_base + c] = in.map->is_navigable(center_in(fr, r, c)) ? 1 : 0;
    }
    for (std::size_t k = 0; k < in.vehicles.size(); ++k) {
      const PixelBox& b = vehicle_boxes[k];
      if (rl < b.r0 || rl > b.r1) continue;
      for (long cl = b.c0; cl <= b.c1; ++cl) {
        const auto c = static_cast<std::size_t>(cl);
        if (in.vehicles[k].contains(center_in(fr, r, c))) out[Layer::Obstacles][row_base + c] = 1;
      }
    }
    for (const Segment& seg : segments) {
      if (rl < seg.box.r0 || rl > seg.box.r1) continue;
      for (long cl = seg.box.c0; cl <= seg.box.c1; ++cl) {
        const auto c = static_cast<std::size_t>(cl);
        if (out[Layer::Path][row_base + c] || !out[Layer::Navigable][row_base + c]) continue;
        if (distance_to_segment(center_in(fr, r, c), seg.a, seg.b) <= half) out[Layer::Path][row_base + c] = 1;
      }
    }
  }
  return out;
}

}  // namespace raster_detail

ViewLayers rasterize_view(const RasterInputs& in) {
  return kernels::current_backend() == kernels::Backend::Serial ? raster_detail::rasterize_reference(in)
                                                                 : raster_detail::rasterize_parallel(in);
}

void write_pgm(const std::filesystem::path& file, const ViewLayers::Grid& grid) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os << "P5\n" << ViewLayers::kSize << ' ' << ViewLayers::kSize << "\n255\n";
  for (std::uint8_t v : grid) os.put(static_cast<char>(v ? 255 : 0));
  if (!os) throw std::runtime_error("failed writing " + file.string());
}

}  // namespace roundabout
