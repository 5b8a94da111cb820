// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <cstring>

#include "doctest.h"
#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/experiment.hpp"
#include "rainbowpo/losses.hpp"
#include "rainbowpo/synth.hpp"
#include "support/oracles.hpp"

using namespace rainbow;

namespace {

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool bit_equal(const LossReport& a, const LossReport& b) {
  if (!bit_equal(a.loss, b.loss) || !bit_equal(a.mean_margin, b.mean_margin)) return false;
  if (a.gradient.size() != b.gradient.size()) return false;
  for (std::size_t i = 0; i < a.gradient.size(); ++i) {
    if (!bit_equal(a.gradient[i], b.gradient[i])) return false;
  }
  return a.per_pair_inner == b.per_pair_inner;
}

const int kThreadCounts[] = {1, 2, 3, 8};

}  // namespace

TEST_CASE("loss kernel matches the serial reference for any thread count") {
  const auto f = oracle::fixture(17, 37, {6, 3, 8});
  RainbowConfig cfg;
  cfg.eta = 1.0;
  cfg.sft_weight = 0.3;
  const auto phi = dispersion_weights(f.ref, f.batch, DispersionConfig{}, true);
  const auto serial = reference::rainbow_loss_serial(f.theta, f.ref, f.batch, cfg, phi);
  for (int t : kThreadCounts) {
    omp_set_num_threads(t);
    CHECK_MESSAGE(bit_equal(rainbow_loss(f.theta, f.ref, f.batch, cfg, phi), serial), "threads=" << t);
    const auto phi_t = dispersion_weights(f.ref, f.batch, DispersionConfig{}, true);
    CHECK(phi_t == phi);
  }
}

TEST_CASE("dataset generation and evaluation match the serial reference") {
  ExperimentConfig cfg;
  cfg.world.vocab = 8;
  cfg.world.contexts = 4;
  cfg.world.max_len = 10;
  const World world = build_world(cfg.world);
  const RngStream rng(cfg.world.seed, 3);
  for (PairMethod m : {PairMethod::BestWorstOfK, PairMethod::RSPlus}) {
    SamplerConfig sc;
    sc.pool = 8;
    sc.accept = 4;
    const auto serial = reference::generate_dataset_serial(world.ref, world.reward, 41, m, sc, rng);
    for (int t : kThreadCounts) {
      omp_set_num_threads(t);
      CHECK(generate_dataset(world.ref, world.reward, 41, m, sc, rng) == serial);
    }
  }
  const auto theta = initial_policy(cfg, world);
  const auto ds = reference::generate_dataset_serial(world.ref, world.reward, 30,
                                                     PairMethod::BestWorstOfK, SamplerConfig{}, rng);
  const RngStream eval_rng(cfg.world.seed, 4);
  const auto serial = reference::evaluate_serial(theta, world.ref, world.reward, ds.pairs, 333, eval_rng);
  for (int t : kThreadCounts) {
    omp_set_num_threads(t);
    const auto par = evaluate(theta, world.ref, world.reward, ds.pairs, 333, eval_rng);
    CHECK(bit_equal(par.win_rate, serial.win_rate));
    CHECK(bit_equal(par.avg_length, serial.avg_length));
    CHECK(bit_equal(par.mean_reward, serial.mean_reward));
    CHECK(par == serial);
  }
}
