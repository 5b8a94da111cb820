// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/policy.hpp"
#include "rainbowpo/rng.hpp"

namespace rainbow {

// Scalar reward r(x, y) used to rank candidates.
using RewardFn = std::function<double(int ctx, const TokenSeq& y)>;

struct SamplerConfig {
  int k = 5;                  // best/worst-of-K candidates
  int pool = 32;              // RS+ candidate pool N
  int accept = 8;             // RS+ accepted-set size M
  double temperature = 0.2;   // RS+ tau
  int max_attempts = 0;       // RS+ attempt cap; 0 means 100 * N

  int attempt_cap() const noexcept { return max_attempts > 0 ? max_attempts : 100 * pool; }
  void validate() const;

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

struct SampledPair {
  PreferencePair pair;
  bool degenerate = false;  // every candidate was the same sequence
};

// Draws K candidates and returns (argmax, argmin) by reward, ties to the
// lowest candidate index. Candidates come from rng.substream(0).
SampledPair best_worst_of_k(const PolicyModel& policy, const RewardFn& reward, int ctx,
                            const SamplerConfig& cfg, const RngStream& rng);

// P_i = rank_i / N with ascending ranks; equal rewards rank by index.
std::vector<double> percentiles(std::span<const double> rewards);

// exp((P - 1) / tau)
double acceptance_probability(double percentile, double temperature) noexcept;

// Outcome of the RS+ acceptance loop over a fixed candidate pool.
struct RsSelection {
  enum class Visit : std::int8_t { NotVisited, Rejected, Accepted };

  std::vector<std::size_t> accepted;  // candidate indices, in acceptance order
  std::vector<Visit> first_visit;     // decision at each candidate's first visit
  int attempts = 0;
  std::size_t backfilled = 0;         // accepted by the attempt-cap backfill
};

// Attempt j visits candidate (j - 1) mod N and accepts it with probability
// exp((P - 1) / tau) unless it is already accepted. Stops at M accepted or
// after the attempt cap, then backfills with the highest-percentile
// unaccepted candidates.
RsSelection rs_select(std::span<const double> percentile, const SamplerConfig& cfg,
                      RngStream& rng);

// Percentile rejection sampling: N candidates from rng.substream(0),
// acceptance draws from rng.substream(1); the pair is the best and worst
// reward within the accepted set.
SampledPair rs_plus(const PolicyModel& policy, const RewardFn& reward, int ctx,
                    const SamplerConfig& cfg, const RngStream& rng);

}  // namespace rainbow
