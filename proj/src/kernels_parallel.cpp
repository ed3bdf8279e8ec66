#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "roundabout/kernels.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace roundabout::kernels {

namespace {

#if defined(_OPENMP)
thread_local Backend tl_backend = Backend::Parallel;
#else
thread_local Backend tl_backend = Backend::Serial;
#endif

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kMinParallelWork = 1U << 15;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_conv(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                std::span<const double> b, std::size_t out_size) {
  require(s.kernel > 0 && s.stride > 0 && s.kernel <= s.height && s.kernel <= s.width, "conv2d: bad kernel");
  require(in.size() == s.input_size(), "conv2d: input size mismatch");
  require(w.size() == s.weight_size(), "conv2d: weight size mismatch");
  require(b.size() == s.filters, "conv2d: bias size mismatch");
  require(out_size == s.output_size(), "conv2d: output size mismatch");
}

}  // namespace

Backend current_backend() { return tl_backend; }
void set_backend(Backend backend) { tl_backend = backend; }
bool openmp_enabled() {
#if defined(_OPENMP)
  return true;
#else
  return false;
#endif
}

void set_thread_budget(int threads) {
#if defined(_OPENMP)
  omp_set_num_threads(std::max(1, threads));
#else
  (void)threads;
#endif
}

namespace parallel {

namespace {

/// Non-zero entries of every receptive field, in (channel, ky, kx) order.
struct SparsePatches {
  std::vector<std::size_t> begin;    // per output position, into entries; size positions + 1
  std::vector<std::uint32_t> offset;  // index into one filter's [C,K,K] weights
  std::vector<double> value;
};

SparsePatches gather_patches(const ConvShape& s, const double* src) {
  const std::size_t oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  const std::size_t plane = s.height * s.width;
  SparsePatches p;
  p.begin.reserve(oh * ow + 1);
  p.begin.push_back(0);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* base = src + oy * s.stride * s.width + ox * s.stride;
      for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const double* ir = base + c * plane + ky * s.width;
          for (std::size_t kx = 0; kx < k; ++kx) {
            if (ir[kx] != 0.0) {
              p.offset.push_back(static_cast<std::uint32_t>((c * k + ky) * k + kx));
              p.value.push_back(ir[kx]);
            }
          }
        }
      }
      p.begin.push_back(p.offset.size());
    }
  }
  return p;
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out) {
  const std::size_t positions = s.out_height() * s.out_width();
  const std::size_t wstride = s.channels * s.kernel * s.kernel;
  const SparsePatches p = gather_patches(s, in.data());
  const double* wt = w.data();
  double* dst = out.data();
  [[maybe_unused]] const bool big = s.filters * p.offset.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (long fl = 0; fl < static_cast<long>(s.filters); ++fl) {
    const auto f = static_cast<std::size_t>(fl);
    const double* wf = wt + f * wstride;
    for (std::size_t pos = 0; pos < positions; ++pos) {
      double acc = b[f];
      for (std::size_t e = p.begin[pos]; e < p.begin[pos + 1]; ++e) acc += wf[p.offset[e]] * p.value[e];
      dst[f * positions + pos] = acc;
    }
  }
}

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din) {
  const std::size_t oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  const std::size_t positions = oh * ow;
  const std::size_t plane = s.height * s.width;
  const std::size_t wstride = s.channels * k * k;
  const double* g = dout.data();
  const double* wt = w.data();
  const SparsePatches p = gather_patches(s, in.data());
  [[maybe_unused]] const bool big = s.filters * p.offset.size() >= kMinParallelWork;

  for (std::size_t f = 0; f < s.filters; ++f) {
    double acc = 0.0;
    for (std::size_t o = 0; o < positions; ++o) acc += g[f * positions + o];
    db[f] += acc;
  }

#pragma omp parallel for schedule(static) if (big)
  for (long fl = 0; fl < static_cast<long>(s.filters); ++fl) {
    const auto f = static_cast<std::size_t>(fl);
    std::vector<double> acc(wstride, 0.0);
    const double* gf = g + f * positions;
    for (std::size_t pos = 0; pos < positions; ++pos) {
      const double gv = gf[pos];
      if (gv == 0.0) continue;
      for (std::size_t e = p.begin[pos]; e < p.begin[pos + 1]; ++e) acc[p.offset[e]] += gv * p.value[e];
    }
    double* dwf = dw.data() + f * wstride;
    for (std::size_t i = 0; i < wstride; ++i) dwf[i] += acc[i];
  }

  if (din.empty()) return;
  const auto channels = static_cast<long>(s.channels);
#pragma omp parallel for schedule(static) if (big)
  for (long cl = 0; cl < channels; ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    double* dc = din.data() + c * plane;
    std::fill(dc, dc + plane, 0.0);
    for (std::size_t f = 0; f < s.filters; ++f) {
      const double* wc = wt + (f * s.channels + c) * k * k;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double gv = g[(f * oh + oy) * ow + ox];
          if (gv == 0.0) continue;
          double* base = dc + oy * s.stride * s.width + ox * s.stride;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) base[ky * s.width + kx] += gv * wc[ky * k + kx];
          }
        }
      }
    }
  }
}

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
  const std::size_t n_in = x.size();
  const auto n_out = static_cast<long>(y.size());
  [[maybe_unused]] const bool big = y.size() * n_in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (long ol = 0; ol < n_out; ++ol) {
    const auto o = static_cast<std::size_t>(ol);
    const double* row = w.data() + o * n_in;
    double acc = b[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t n_in = x.size();
  const std::size_t n_out = dy.size();
  [[maybe_unused]] const bool big = n_out * n_in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (long ol = 0; ol < static_cast<long>(n_out); ++ol) {
    const auto o = static_cast<std::size_t>(ol);
    const double g = dy[o];
    db[o] += g;
    if (g == 0.0) continue;
    double* row = dw.data() + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) row[i] += g * x[i];
  }
  if (dx.empty()) return;
  // Column blocks; per element the sum runs over o in ascending order.
  constexpr std::size_t kBlock = 256;
  const auto blocks = static_cast<long>((n_in + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (big)
  for (long bl = 0; bl < blocks; ++bl) {
    const std::size_t lo = static_cast<std::size_t>(bl) * kBlock;
    const std::size_t hi = std::min(n_in, lo + kBlock);
    std::fill(dx.begin() + static_cast<long>(lo), dx.begin() + static_cast<long>(hi), 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      const double* row = w.data() + o * n_in;
      for (std::size_t i = lo; i < hi; ++i) dx[i] += row[i] * g;
    }
  }
}

}  // namespace parallel

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out) {
  check_conv(s, in, w, b, out.size());
  if (tl_backend == Backend::Serial)
    serial::conv2d_forward(s, in, w, b, out);
  else
    parallel::conv2d_forward(s, in, w, b, out);
}

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din) {
  check_conv(s, in, w, db, dout.size());
  require(dw.size() == w.size(), "conv2d: weight-gradient size mismatch");
  require(din.empty() || din.size() == in.size(), "conv2d: input-gradient size mismatch");
  if (tl_backend == Backend::Serial)
    serial::conv2d_backward(s, in, dout, w, dw, db, din);
  else
    parallel::conv2d_backward(s, in, dout, w, dw, db, din);
}

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
  require(w.size() == x.size() * y.size() && b.size() == y.size(), "dense: size mismatch");
  if (tl_backend == Backend::Serial)
    serial::dense_forward(x, w, b, y);
  else
    parallel::dense_forward(x, w, b, y);
}

void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx) {
  require(w.size() == x.size() * dy.size() && dw.size() == w.size() && db.size() == dy.size(),
          "dense: size mismatch");
  require(dx.empty() || dx.size() == x.size(), "dense: input-gradient size mismatch");
  if (tl_backend == Backend::Serial)
    serial::dense_backward(x, dy, w, dw, db, dx);
  else
    parallel::dense_backward(x, dy, w, dw, db, dx);
}

}  // namespace roundabout::kernels
