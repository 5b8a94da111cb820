// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. Arg(0) is the serial baseline; Arg(t)
// runs the parallel kernel on t threads.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/experiment.hpp"
#include "rainbowpo/losses.hpp"
#include "rainbowpo/synth.hpp"

using namespace rainbow;

namespace {

struct Setup {
  ExperimentConfig cfg;
  World world;
  PolicyModel theta;
  PreferenceDataset data;
  std::vector<double> phi;

  Setup() : world(build_world(cfg.world)), theta(initial_policy(cfg, world)) {
    data = make_dataset(cfg, world);
    phi = dispersion_weights(world.ref, data.pairs, cfg.dispersion, true);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void threads_arg(benchmark::internal::Benchmark* b) {
  b->Arg(0);
  for (int t = 1; t <= omp_get_num_procs(); t *= 2) b->Arg(t);
}

void BM_RainbowLoss(benchmark::State& state) {
  const Setup& s = setup();
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0
                 ? reference::rainbow_loss_serial(s.theta, s.world.ref, s.data.pairs, s.cfg.loss, s.phi)
                 : rainbow_loss(s.theta, s.world.ref, s.data.pairs, s.cfg.loss, s.phi);
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.data.pairs.size()));
}
BENCHMARK(BM_RainbowLoss)->Apply(threads_arg);

void BM_GenerateDataset(benchmark::State& state) {
  const Setup& s = setup();
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  const RngStream rng(s.cfg.world.seed, kDatasetStream);
  for (auto _ : state) {
    auto ds = threads == 0
                  ? reference::generate_dataset_serial(s.world.ref, s.world.reward, 500,
                                                       PairMethod::BestWorstOfK, s.cfg.sampler, rng)
                  : generate_dataset(s.world.ref, s.world.reward, 500, PairMethod::BestWorstOfK,
                                     s.cfg.sampler, rng);
    benchmark::DoNotOptimize(ds.pairs.data());
  }
  state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_GenerateDataset)->Apply(threads_arg);

void BM_Evaluate(benchmark::State& state) {
  const Setup& s = setup();
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  const RngStream rng(s.cfg.world.seed, kEvalStream);
  for (auto _ : state) {
    auto r = threads == 0
                 ? reference::evaluate_serial(s.theta, s.world.ref, s.world.reward, s.data.pairs, 2000, rng)
                 : evaluate(s.theta, s.world.ref, s.world.reward, s.data.pairs, 2000, rng);
    benchmark::DoNotOptimize(r.win_rate);
  }
  state.SetItemsProcessed(state.iterations() * 2000);
}
BENCHMARK(BM_Evaluate)->Apply(threads_arg);

}  // namespace

BENCHMARK_MAIN();
