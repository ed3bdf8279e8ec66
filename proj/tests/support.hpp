#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "roundabout/geometry.hpp"

namespace roundabout::prop {

/// Small hand-rolled generator set for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }
  Vec2 point(double extent) { return {uniform(-extent, extent), uniform(-extent, extent)}; }
  OrientedRect rect(double extent, double max_side) {
    return {point(extent), uniform(-M_PI, M_PI), uniform(0.2, max_side), uniform(0.2, max_side)};
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace roundabout::prop
