#pragma once

#include <cstddef>
#include <span>

namespace roundabout::kernels {

/// Which implementation the dispatching entry points use. `Serial` is the
/// straightforward reference; `Parallel` is the OpenMP version. Both produce
/// bit-identical results (same per-output summation order).
enum class Backend { Serial, Parallel };

/// Per-thread selection; defaults to Parallel when built with OpenMP.
Backend current_backend();
void set_backend(Backend backend);
bool openmp_enabled();
/// OpenMP team size for parallel regions started by the calling thread.
void set_thread_budget(int threads);

class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(current_backend()) { set_backend(backend); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

/// Valid (unpadded) square-kernel convolution over a CHW tensor.
struct ConvShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height - kernel) / stride + 1; }
  std::size_t out_width() const { return (width - kernel) / stride + 1; }
  std::size_t input_size() const { return channels * height * width; }
  std::size_t output_size() const { return filters * out_height() * out_width(); }
  std::size_t weight_size() const { return filters * channels * kernel * kernel; }
};

// Layouts: input [C,H,W], weights [F,C,K,K], output [F,OH,OW], dense W [out,in].
// Backward kernels accumulate into dw/db; din/dx are overwritten and may be
// empty to skip the input gradient.

namespace serial {
void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out);
void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din);
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx);
}  // namespace serial

namespace parallel {
void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out);
void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din);
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx);
}  // namespace parallel

// Dispatch on current_backend().
void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out);
void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                     std::span<const double> w, std::span<double> dw, std::span<double> db,
                     std::span<double> din);
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
void dense_backward(std::span<const double> x, std::span<const double> dy, std::span<const double> w,
                    std::span<double> dw, std::span<double> db, std::span<double> dx);

}  // namespace roundabout::kernels
