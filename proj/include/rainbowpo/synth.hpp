// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/policy.hpp"
#include "rainbowpo/rng.hpp"
#include "rainbowpo/sampler.hpp"

namespace rainbow {

// Latent reward r*(x, y) = sum_i score[x][y_i] + length_bias * |y|.
struct SyntheticReward {
  int contexts = 0;
  int vocab = 0;
  std::vector<double> token_scores;  // [contexts][vocab], Normal(0, 1)
  double length_bias = 0.0;
  std::uint64_t seed = 0;

  static SyntheticReward random(int contexts, int vocab, double length_bias,
                                std::uint64_t seed);

  double operator()(int ctx, const TokenSeq& y) const;

  // Stable hex digest of dimensions, bias, seed and every score.
  std::string hash() const;

  RewardFn as_fn() const;
};

// Bradley-Terry preference probability with home advantage:
// sigmoid(r_w - r_l - gamma_world).
double bt_preference_prob(double r_w, double r_l, double gamma_world) noexcept;

enum class PairMethod { BestWorstOfK, RSPlus };

const char* to_string(PairMethod m) noexcept;
PairMethod pair_method_from_string(const std::string& s);

// One pair per prompt; prompt p uses context p mod C and rng.substream(p).
// Prompts are generated in parallel.
PreferenceDataset generate_dataset(const PolicyModel& ref, const SyntheticReward& reward,
                                   int prompts, PairMethod method, const SamplerConfig& cfg,
                                   const RngStream& rng);

struct EvalReport {
  double win_rate = 0.0;           // ties count 0.5
  double avg_length = 0.0;         // mean |y_theta|
  double pairwise_accuracy = 0.0;  // strict implicit-reward ordering on held-out pairs
  double mean_reward = 0.0;        // mean r*(y_theta)
  std::size_t pairwise_ties = 0;
  std::size_t n_eval = 0;
  std::size_t n_heldout = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Draw i (context i mod C) samples theta from rng.substream(i).substream(0)
// and the reference from rng.substream(i).substream(1).
EvalReport evaluate(const PolicyModel& theta, const PolicyModel& ref,
                    const SyntheticReward& reward, std::span<const PreferencePair> held_out,
                    int n_eval, const RngStream& rng);

struct DatasetSplit {
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> held_out;
};

// The last round(fraction * size) pairs by index are held out.
DatasetSplit split_holdout(std::span<const PreferencePair> pairs, double fraction);

namespace reference {

PreferenceDataset generate_dataset_serial(const PolicyModel& ref, const SyntheticReward& reward,
                                          int prompts, PairMethod method,
                                          const SamplerConfig& cfg, const RngStream& rng);

EvalReport evaluate_serial(const PolicyModel& theta, const PolicyModel& ref,
                           const SyntheticReward& reward,
                           std::span<const PreferencePair> held_out, int n_eval,
                           const RngStream& rng);

}  // namespace reference

}  // namespace rainbow
