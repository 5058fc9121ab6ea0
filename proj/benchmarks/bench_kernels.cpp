// Microbenchmarks for the compute kernels behind training and the metrics.

#include <benchmark/benchmark.h>

#include "vesselbench/connectivity.hpp"
#include "vesselbench/edt.hpp"
#include "vesselbench/metrics.hpp"
#include "vesselbench/phantom.hpp"
#include "vesselbench/rng.hpp"
#include "vesselbench/tensor.hpp"

namespace {

vb::Tensor random_tensor(int n, int c, int d, int h, int w, std::uint64_t seed) {
  vb::Tensor t(n, c, d, h, w);
  vb::Rng rng(seed);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

vb::PhantomSample make_phantom(int side, std::uint64_t seed) {
  vb::PhantomConfig cfg;
  cfg.shape = {side, side, side};
  cfg.root_radius = 3.0;
  cfg.branching_depth = 3;
  cfg.radius_decay = 0.72;
  cfg.tortuosity = 1.0;
  cfg.noise_std = 0.3;
  cfg.rng_seed = seed;
  return vb::generate_phantom(cfg);
}

void BM_Conv3dForward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  vb::Rng init(1);
  vb::Conv3d conv(ch, ch, 3, 1, init);
  const vb::Tensor x = random_tensor(1, ch, 32, 32, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_Conv3dForward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  vb::Rng init(1);
  vb::Conv3d conv(ch, ch, 3, 1, init);
  const vb::Tensor x = random_tensor(1, ch, 32, 32, 32, 2);
  const vb::Tensor gy = random_tensor(1, ch, 32, 32, 32, 3);
  conv.forward(x);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(gy));
}
BENCHMARK(BM_Conv3dBackward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SquaredEdt(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const vb::PhantomSample p = make_phantom(side, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(vb::squared_edt(p.label.shape, p.label.data.data()));
}
BENCHMARK(BM_SquaredEdt)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Skeletonize(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const vb::PhantomSample p = make_phantom(side, 5);
  for (auto _ : state) benchmark::DoNotOptimize(vb::skeletonize(p.label));
}
BENCHMARK(BM_Skeletonize)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ConnectedComponents(benchmark::State& state) {
  const vb::PhantomSample p = make_phantom(64, 6);
  for (auto _ : state)
    benchmark::DoNotOptimize(vb::count_components(p.label.data.data(), p.label.shape, 26));
}
BENCHMARK(BM_ConnectedComponents)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
