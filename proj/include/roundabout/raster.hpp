#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "roundabout/geometry.hpp"
#include "roundabout/scenario.hpp"

namespace roundabout {

enum class Layer : std::size_t { Navigable = 0, Obstacles = 1, Path = 2 };

/// Three binary 84x84 semantic layers of a 50 m x 50 m agent-centered window.
/// Row 0 is the top of the image; the ego heading points to image-up.
struct ViewLayers {
  static constexpr std::size_t kSize = 84;
  static constexpr std::size_t kPixels = kSize * kSize;
  static constexpr std::size_t kLayers = 3;
  static constexpr double kWindow = 50.0;
  static constexpr double kMetersPerPixel = kWindow / static_cast<double>(kSize);

  using Grid = std::array<std::uint8_t, kPixels>;
  std::array<Grid, kLayers> layers{};

  Grid& operator[](Layer l) { return layers[static_cast<std::size_t>(l)]; }
  const Grid& operator[](Layer l) const { return layers[static_cast<std::size_t>(l)]; }
  std::uint8_t at(Layer l, std::size_t row, std::size_t col) const { return (*this)[l][row * kSize + col]; }
  std::size_t count(Layer l) const;
  bool operator==(const ViewLayers&) const = default;
};

/// World position of the center of pixel (row, col) in the view of `ego`.
Vec2 pixel_center(const Pose& ego, std::size_t row, std::size_t col);

/// Remaining path from arc position `from_s` as a polyline starting at the
/// current position.
std::vector<Vec2> remaining_polyline(const PathSpec& path, double from_s);

struct RasterInputs {
  const RoundaboutMap* map = nullptr;
  std::span<const OrientedRect> vehicles;  // every vehicle, ego included
  Pose ego;
  const PathSpec* ego_path = nullptr;
  double ego_s = 0.0;
};

/// Cell value is 1 iff the cell center lies inside the shape (closed test).
/// The path layer is a lane-width band around the remaining path, clipped to
/// the navigable surface. Dispatches on kernels::current_backend().
ViewLayers rasterize_view(const RasterInputs& in);

namespace raster_detail {
ViewLayers rasterize_reference(const RasterInputs& in);
ViewLayers rasterize_parallel(const RasterInputs& in);
bool on_path_band(Vec2 p, std::span<const Vec2> polyline, double half_width);
}  // namespace raster_detail

/// Binary PGM (P5, maxval 255, pixels 0 or 255).
void write_pgm(const std::filesystem::path& file, const ViewLayers::Grid& grid);

}  // namespace roundabout
