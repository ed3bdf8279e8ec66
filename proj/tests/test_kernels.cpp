#include <gtest/gtest.h>

#include <cstring>

#include "roundabout/kernels.hpp"
#include "support.hpp"

using namespace roundabout;
using namespace roundabout::kernels;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

/// Inputs with a given fraction of exact zeros, like binary views and ReLU outputs.
std::vector<double> sparse_vec(prop::Gen& g, std::size_t n, double zero_fraction) {
  std::vector<double> v(n);
  for (double& x : v) x = g.uniform(0, 1) < zero_fraction ? 0.0 : g.uniform(-2, 2);
  return v;
}

ConvShape random_shape(prop::Gen& g) {
  ConvShape s;
  s.channels = static_cast<std::size_t>(g.integer(1, 4));
  s.kernel = static_cast<std::size_t>(g.integer(1, 5));
  s.stride = static_cast<std::size_t>(g.integer(1, 3));
  s.height = s.kernel + static_cast<std::size_t>(g.integer(0, 12));
  s.width = s.kernel + static_cast<std::size_t>(g.integer(0, 12));
  s.filters = static_cast<std::size_t>(g.integer(1, 5));
  return s;
}

}  // namespace

TEST(Conv2d, HandComputedSingleFilter) {
  // 1 channel 3x3 input, 2x2 kernel, stride 1
  ConvShape s{1, 3, 3, 1, 2, 1};
  const std::vector<double> in{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::vector<double> w{1, 0, 0, -1};
  const std::vector<double> b{0.5};
  std::vector<double> out(4);
  serial::conv2d_forward(s, in, w, b, out);
  EXPECT_EQ(out, (std::vector<double>{1 - 5 + 0.5, 2 - 6 + 0.5, 4 - 8 + 0.5, 5 - 9 + 0.5}));
  std::vector<double> outp(4);
  parallel::conv2d_forward(s, in, w, b, outp);
  EXPECT_EQ(out, outp);
}

TEST(Conv2d, SerialAndParallelAreBitIdentical) {
  prop::Gen g(11);
  for (int trial = 0; trial < 60; ++trial) {
    const ConvShape s = random_shape(g);
    const double zeros = g.uniform(0.0, 0.95);
    const auto in = sparse_vec(g, s.input_size(), zeros);
    const auto w = g.vec(s.weight_size(), -1, 1);
    const auto b = g.vec(s.filters, -1, 1);
    const auto dout = sparse_vec(g, s.output_size(), 0.5);
    std::vector<double> o1(s.output_size()), o2(s.output_size());
    serial::conv2d_forward(s, in, w, b, o1);
    parallel::conv2d_forward(s, in, w, b, o2);
    EXPECT_TRUE(bit_equal(o1, o2)) << "forward trial " << trial;

    auto dw1 = g.vec(s.weight_size(), -1, 1);
    auto dw2 = dw1;
    auto db1 = g.vec(s.filters, -1, 1);
    auto db2 = db1;
    std::vector<double> di1(s.input_size(), 7.0), di2(s.input_size(), -3.0);
    serial::conv2d_backward(s, in, dout, w, dw1, db1, di1);
    parallel::conv2d_backward(s, in, dout, w, dw2, db2, di2);
    EXPECT_TRUE(bit_equal(dw1, dw2)) << "dw trial " << trial;
    EXPECT_TRUE(bit_equal(db1, db2)) << "db trial " << trial;
    EXPECT_TRUE(bit_equal(di1, di2)) << "din trial " << trial;
  }
}

TEST(Conv2d, BackwardIsAdjointOfForward) {
  // <dout, conv(in)> linear in in and w: compare against directional derivatives.
  prop::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const ConvShape s = random_shape(g);
    const auto in = g.vec(s.input_size(), -1, 1);
    const auto w = g.vec(s.weight_size(), -1, 1);
    const std::vector<double> zero_b(s.filters, 0.0);
    const auto dout = g.vec(s.output_size(), -1, 1);
    const auto din_dir = g.vec(s.input_size(), -1, 1);
    const auto dw_dir = g.vec(s.weight_size(), -1, 1);
    std::vector<double> dw(s.weight_size(), 0.0), db(s.filters, 0.0), din(s.input_size());
    serial::conv2d_backward(s, in, dout, w, dw, db, din);
    auto inner = [&](const std::vector<double>& x, const std::vector<double>& k) {
      std::vector<double> o(s.output_size());
      serial::conv2d_forward(s, x, k, zero_b, o);
      double acc = 0;
      for (std::size_t i = 0; i < o.size(); ++i) acc += o[i] * dout[i];
      return acc;
    };
    double lhs_in = 0, lhs_w = 0;
    for (std::size_t i = 0; i < din.size(); ++i) lhs_in += din[i] * din_dir[i];
    for (std::size_t i = 0; i < dw.size(); ++i) lhs_w += dw[i] * dw_dir[i];
    EXPECT_NEAR(lhs_in, inner(din_dir, w), 1e-10);
    EXPECT_NEAR(lhs_w, inner(in, dw_dir), 1e-10);
  }
}

TEST(Dense, SerialAndParallelAreBitIdentical) {
  prop::Gen g(12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n_in = static_cast<std::size_t>(g.integer(1, 700));
    const auto n_out = static_cast<std::size_t>(g.integer(1, 300));
    const auto x = sparse_vec(g, n_in, 0.4);
    const auto w = g.vec(n_in * n_out, -1, 1);
    const auto b = g.vec(n_out, -1, 1);
    const auto dy = sparse_vec(g, n_out, 0.3);
    std::vector<double> y1(n_out), y2(n_out);
    serial::dense_forward(x, w, b, y1);
    parallel::dense_forward(x, w, b, y2);
    EXPECT_TRUE(bit_equal(y1, y2));
    auto dw1 = g.vec(n_in * n_out, -1, 1);
    auto dw2 = dw1;
    std::vector<double> db1(n_out, 0.5), db2(n_out, 0.5), dx1(n_in, 9.0), dx2(n_in, -9.0);
    serial::dense_backward(x, dy, w, dw1, db1, dx1);
    parallel::dense_backward(x, dy, w, dw2, db2, dx2);
    EXPECT_TRUE(bit_equal(dw1, dw2));
    EXPECT_TRUE(bit_equal(db1, db2));
    EXPECT_TRUE(bit_equal(dx1, dx2));
  }
}

TEST(Dense, HandComputed) {
  const std::vector<double> x{1, 2}, w{1, 2, 3, 4, 5, 6}, b{0.5, 0, -1};
  std::vector<double> y(3);
  dense_forward(x, w, b, y);
  EXPECT_EQ(y, (std::vector<double>{5.5, 11, 16}));
  const std::vector<double> dy{1, 0, -1};
  std::vector<double> dw(6, 0.0), db(3, 0.0), dx(2);
  dense_backward(x, dy, w, dw, db, dx);
  EXPECT_EQ(dw, (std::vector<double>{1, 2, 0, 0, -1, -2}));
  EXPECT_EQ(db, (std::vector<double>{1, 0, -1}));
  EXPECT_EQ(dx, (std::vector<double>{1 - 5, 2 - 6}));
}

TEST(Dispatch, ChecksSizesAndHonoursBackend) {
  const ConvShape s{1, 4, 4, 1, 2, 2};
  std::vector<double> in(16, 1.0), w(4, 1.0), b(1, 0.0), out(3);
  EXPECT_THROW(conv2d_forward(s, in, w, b, out), std::invalid_argument);
  std::vector<double> y(2);
  EXPECT_THROW(dense_forward(in, w, b, y), std::invalid_argument);
  {
    ScopedBackend scope(Backend::Serial);
    EXPECT_EQ(current_backend(), Backend::Serial);
  }
  EXPECT_EQ(current_backend(), openmp_enabled() ? Backend::Parallel : Backend::Serial);
}
