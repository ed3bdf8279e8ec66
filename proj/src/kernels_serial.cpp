// Reference kernels: direct loops, no parallelism. The parallel versions in
// kernels_parallel.cpp must match these bit for bit.
#include <algorithm>

#include "roundabout/kernels.hpp"

namespace roundabout::kernels::serial {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out) {
  const std::size_t oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b[f];
        for (std::size_t c = 0; c < s.channels; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t y = oy * s.stride + ky;
              const std::size_t x = ox * s.stride + kx;
              acc += w[((f * s.channels + c) * k + ky) * k + kx] * in[(c * s.height + y) * s.width + x];
            }
          }
        }
        out[(f * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din) {
  const std::size_t oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  for (std::size_t f = 0; f < s.filters; ++f) {
    double acc = 0.0;
    for (std::size_t o = 0; o < oh * ow; ++o) acc += dout[f * oh * ow + o];
    db[f] += acc;
  }
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              acc += dout[(f * oh + oy) * ow + ox] *
                     in[(c * s.height + oy * s.stride + ky) * s.width + ox * s.stride + kx];
            }
          }
          dw[((f * s.channels + c) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
  if (din.empty()) return;
  std::fill(din.begin(), din.end(), 0.0);
  for (std::size_t f = 0; f < s.filters; ++f) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = dout[(f * oh + oy) * ow + ox];
        for (std::size_t c = 0; c < s.channels; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              din[(c * s.height + oy * s.stride + ky) * s.width + ox * s.stride + kx] +=
                  g * w[((f * s.channels + c) * k + ky) * k + kx];
            }
          }
        }
      }
    }
  }
}

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
  const std::size_t n_in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += w[o * n_in + i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t n_in = x.size();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    db[o] += dy[o];
    for (std::size_t i = 0; i < n_in; ++i) dw[o * n_in + i] += dy[o] * x[i];
  }
  if (dx.empty()) return;
  std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) {
    for (std::size_t i = 0; i < n_in; ++i) dx[i] += w[o * n_in + i] * dy[o];
  }
}

}  // namespace roundabout::kernels::serial
