#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "roundabout/kernels.hpp"
#include "roundabout/nn.hpp"
#include "roundabout/raster.hpp"
#include "roundabout/traffic_env.hpp"

using namespace roundabout;

namespace {

// A real observation: the visual input is mostly zeros.
const PolicyInput& sample_input() {
  static const PolicyInput input = [] {
    TrafficEnv env(EnvConfig{}, RewardConfig{}, GeometryConfig{});
    for (int t = 0; t < 120; ++t) {
      JointAction j;
      for (AgentId id : env.active_agents()) j[id] = static_cast<int>(Action::Accelerate);
      env.step(j);
    }
    PolicyInput in;
    env.policy_input(env.active_agents().front(), in);
    return in;
  }();
  return input;
}

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

const kernels::ConvShape kConv1{12, 84, 84, 16, 8, 4};

template <bool Parallel>
void BM_Conv1Forward(benchmark::State& state) {
  const auto& in = sample_input().visual;
  const auto w = random_vec(kConv1.weight_size(), 1), b = random_vec(kConv1.filters, 2);
  std::vector<double> out(kConv1.output_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::conv2d_forward(kConv1, in, w, b, out);
    else
      kernels::serial::conv2d_forward(kConv1, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Conv1Backward(benchmark::State& state) {
  const auto& in = sample_input().visual;
  const auto w = random_vec(kConv1.weight_size(), 1), dout = random_vec(kConv1.output_size(), 3);
  std::vector<double> dw(w.size()), db(kConv1.filters);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::conv2d_backward(kConv1, in, dout, w, dw, db, {});
    else
      kernels::serial::conv2d_backward(kConv1, in, dout, w, dw, db, {});
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& state) {
  const std::size_t n_in = 2592, n_out = 256;
  const auto x = random_vec(n_in, 4), w = random_vec(n_in * n_out, 5), b = random_vec(n_out, 6);
  std::vector<double> y(n_out);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::dense_forward(x, w, b, y);
    else
      kernels::serial::dense_forward(x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_DenseBackward(benchmark::State& state) {
  const std::size_t n_in = 2592, n_out = 256;
  const auto x = random_vec(n_in, 4), w = random_vec(n_in * n_out, 5), dy = random_vec(n_out, 7);
  std::vector<double> dw(w.size()), db(n_out), dx(n_in);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::dense_backward(x, dy, w, dw, db, dx);
    else
      kernels::serial::dense_backward(x, dy, w, dw, db, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_Rasterize(benchmark::State& state) {
  const RoundaboutMap map = build_roundabout(GeometryConfig{});
  const PathSpec path = path_for(map, 0, 1, 0.5);
  const double s = 30.0;
  const Pose ego = arc_point(path, s);
  std::vector<OrientedRect> cars{{ego.position, ego.heading, 4.0, 1.8}};
  for (double ds : {8.0, 16.0, 24.0}) {
    const Pose p = arc_point(path, s + ds);
    cars.push_back({p.position, p.heading, 4.0, 1.8});
  }
  const RasterInputs in{&map, cars, ego, &path, s};
  for (auto _ : state) {
    ViewLayers v = Parallel ? raster_detail::rasterize_parallel(in) : raster_detail::rasterize_reference(in);
    benchmark::DoNotOptimize(v.layers.data());
  }
}

template <bool Parallel>
void BM_NetworkForwardBackward(benchmark::State& state) {
  const PolicyValueNet net = init_params(NetSpec::traffic(), 1);
  const PolicyInput& in = sample_input();
  Gradients grads(net);
  const std::vector<double> dlogits{0.1, -0.2, 0.1};
  kernels::ScopedBackend backend(Parallel ? kernels::Backend::Parallel : kernels::Backend::Serial);
  for (auto _ : state) {
    const ForwardCache c = forward(net, in.visual, in.numeric);
    backward(net, c, dlogits, 0.5, grads);
    benchmark::DoNotOptimize(grads.values().data());
  }
}

}  // namespace

BENCHMARK(BM_Conv1Forward<false>)->Name("conv1_forward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv1Forward<true>)->Name("conv1_forward/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv1Backward<false>)->Name("conv1_backward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv1Backward<true>)->Name("conv1_backward/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseForward<false>)->Name("dense_forward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseForward<true>)->Name("dense_forward/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseBackward<false>)->Name("dense_backward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseBackward<true>)->Name("dense_backward/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Rasterize<false>)->Name("rasterize/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Rasterize<true>)->Name("rasterize/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NetworkForwardBackward<false>)->Name("network_step/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NetworkForwardBackward<true>)->Name("network_step/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
