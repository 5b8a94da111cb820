// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/losses.hpp"
#include "rainbowpo/policy.hpp"
#include "rainbowpo/sampler.hpp"
#include "rainbowpo/synth.hpp"
#include "rainbowpo/trainer.hpp"

namespace rainbow {

struct WorldConfig {
  int vocab = 12;
  int contexts = 8;
  int max_len = 16;
  double length_bias = 0.05;  // kappa of the synthetic reward
  std::uint64_t seed = 2024;
  double ref_scale = 1.0;     // stddev of reference logits
  double init_scale = 0.1;    // stddev of the trainable policy's offset from the reference

  PolicyShape shape() const noexcept { return {vocab, contexts, max_len}; }

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct DataConfig {
  int prompts = 500;
  PairMethod method = PairMethod::BestWorstOfK;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct EvalConfig {
  int n_eval = 2000;
  double holdout_fraction = 0.1;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// Defaults follow the RainbowPO row of the published hyper-parameter tables
// (beta 10, alpha 0.25, gamma 0.1, length normalization, dispersion on,
// 3 epochs, tau 0.2) with the learning rate and warm-up rescaled for the toy
// policy.
struct ExperimentConfig {
  WorldConfig world;
  DataConfig data;
  SamplerConfig sampler;
  RainbowConfig loss;
  DispersionConfig dispersion;
  TrainConfig train;
  EvalConfig eval;

  ExperimentConfig();

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// FNV-1a digest (16 hex digits) of a JSON value's compact dump.
std::string json_hash(const nlohmann::ordered_json& j);
std::string config_hash(const ExperimentConfig& cfg);

// Reference policy and latent reward derived from the world seed.
struct World {
  PolicyModel ref;
  SyntheticReward reward;
};

World build_world(const WorldConfig& cfg);

// The reference plus Normal(0, init_scale^2) noise from the training seed.
PolicyModel initial_policy(const ExperimentConfig& cfg, const World& world);

// Dataset for cfg.data drawn from the world's dataset stream.
PreferenceDataset make_dataset(const ExperimentConfig& cfg, const World& world);

}  // namespace rainbow
