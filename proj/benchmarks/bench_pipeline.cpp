// Pipeline-level benchmarks: phantom generation, metric evaluation,
// morphology and one optimizer step per training method.

#include <benchmark/benchmark.h>

#include "vesselbench/degrade.hpp"
#include "vesselbench/metrics.hpp"
#include "vesselbench/phantom.hpp"
#include "vesselbench/train.hpp"

namespace {

vb::PhantomConfig pool_config(std::uint64_t seed) {
  vb::PhantomConfig cfg;
  cfg.shape = {48, 48, 48};
  cfg.root_radius = 3.5;
  cfg.branching_depth = 3;
  cfg.radius_decay = 0.7;
  cfg.tortuosity = 1.0;
  cfg.noise_std = 0.3;
  cfg.rng_seed = seed;
  return cfg;
}

void BM_GeneratePhantom(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(vb::generate_phantom(pool_config(seed++)));
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

void BM_ClDice(benchmark::State& state) {
  const vb::PhantomSample gt = vb::generate_phantom(pool_config(1));
  const vb::LabelVolume pred = vb::erode_safe(gt.label);
  for (auto _ : state) benchmark::DoNotOptimize(vb::cl_dice(pred, gt.label));
}
BENCHMARK(BM_ClDice)->Unit(benchmark::kMillisecond);

void BM_ErodeSafe(benchmark::State& state) {
  const vb::PhantomSample p = vb::generate_phantom(pool_config(2));
  for (auto _ : state) benchmark::DoNotOptimize(vb::erode_safe(p.label));
}
BENCHMARK(BM_ErodeSafe)->Unit(benchmark::kMillisecond);

void BM_PruneDistal(benchmark::State& state) {
  const vb::PhantomSample p = vb::generate_phantom(pool_config(3));
  for (auto _ : state) benchmark::DoNotOptimize(vb::prune_distal(p.label, 2, 7));
}
BENCHMARK(BM_PruneDistal)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto method = static_cast<vb::Method>(state.range(0));
  vb::TrainingSet ts;
  for (int i = 0; i < 4; ++i) {
    vb::PhantomSample s = vb::generate_phantom(pool_config(100 + i));
    ts.images.push_back(vb::normalize_minmax(s.image));
    ts.labels.push_back(std::move(s.label));
    ts.ids.push_back("v" + std::to_string(i));
    (i < 2 ? ts.labeled : ts.unlabeled).push_back(i);
  }
  vb::TrainConfig cfg;
  cfg.method = method;
  cfg.base_width = 4;
  cfg.labeled_per_batch = 1;
  cfg.unlabeled_per_batch = 1;
  cfg.mc_passes = 4;
  cfg.t_max = 1;
  vb::TrainState st(cfg);
  vb::PatchSampler sampler(ts, cfg);
  const vb::ScheduleState sched{0, 100, cfg.lambda_c_final};
  for (auto _ : state) {
    const vb::Batch batch = sampler.next();
    switch (method) {
      case vb::Method::supervised: benchmark::DoNotOptimize(step_supervised(batch, st, sched)); break;
      case vb::Method::mt: benchmark::DoNotOptimize(step_mt(batch, st, sched)); break;
      case vb::Method::uamt: benchmark::DoNotOptimize(step_uamt(batch, st, sched)); break;
      case vb::Method::sassnet: benchmark::DoNotOptimize(step_sassnet(batch, st, sched)); break;
      case vb::Method::dtc: benchmark::DoNotOptimize(step_dtc(batch, st, sched)); break;
      case vb::Method::mcnet: benchmark::DoNotOptimize(step_mcnet(batch, st, sched)); break;
    }
  }
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(vb::Method::supervised))
    ->Arg(static_cast<int>(vb::Method::mt))
    ->Arg(static_cast<int>(vb::Method::uamt))
    ->Arg(static_cast<int>(vb::Method::dtc))
    ->Arg(static_cast<int>(vb::Method::mcnet))
    ->Arg(static_cast<int>(vb::Method::sassnet))
    ->Unit(benchmark::kMillisecond);

}  // namespace
