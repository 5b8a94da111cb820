// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/losses.hpp"
#include "rainbowpo/policy.hpp"

namespace rainbow {

enum class OptimizerKind { SGD, Adam };

const char* to_string(OptimizerKind k) noexcept;
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-6;
  int epochs = 3;
  int batch_size = 8;
  // In (0, 1): fraction of total steps. >= 1: step count. 0: no warm-up.
  double warmup = 150;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables clipping
  int checkpoint_every = 0;    // epochs between checkpoints; 0 disables
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::size_t steps_per_epoch(std::size_t pairs, int batch_size) noexcept;

// Resolved warm-up length W for a run of total_steps.
int warmup_steps(const TrainConfig& cfg, int total_steps);

// Linear ramp from 0 to lr over W steps, then constant. Throws ConfigError
// when W >= total_steps or step is outside [0, total_steps).
double lr_at_step(const TrainConfig& cfg, int step, int total_steps);

struct TrainResult {
  PolicyModel policy;
  std::vector<double> loss_trace;  // one entry per optimizer step
};

// Called after each epoch with the 1-based epoch number.
using EpochCallback = std::function<void(int epoch, const PolicyModel& policy,
                                         std::span<const double> epoch_losses)>;

// Minibatch training on rainbow_loss. Pairs are reshuffled every epoch from
// a per-epoch substream of train_cfg.seed, so runs are bit-reproducible.
// Throws NumericalError (with the step index) on a non-finite loss.
TrainResult train(const PolicyModel& theta_init, const PolicyModel& ref,
                  std::span<const PreferencePair> data, const RainbowConfig& loss_cfg,
                  const TrainConfig& train_cfg, const DispersionConfig& disp_cfg = {},
                  const EpochCallback& on_epoch = {});

}  // namespace rainbow
