// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/policy.hpp"

namespace rainbow {

struct DispersionConfig {
  double floor = 1e-6;            // lower clamp on the entropy ratio
  bool per_token_average = true;  // divide by the N - 1 transitions

  void validate() const;

  friend bool operator==(const DispersionConfig&, const DispersionConfig&) = default;
};

// Contextual scaling phi = -log(clamp(rho, floor, 1)), where rho is the
// reference policy's predictive entropy along both responses relative to
// log n. Transition i (1 <= i < N, N = max(|y_w|, |y_l|)) uses the state
// after token i; a sequence shorter than N repeats its final token's state.
// N == 1 gives phi = 0.
double dispersion(const PolicyModel& ref, const PreferencePair& pair,
                  const DispersionConfig& cfg);

// phi per pair (computed in parallel), or all ones when `enabled` is false.
std::vector<double> dispersion_weights(const PolicyModel& ref,
                                       std::span<const PreferencePair> pairs,
                                       const DispersionConfig& cfg, bool enabled);

}  // namespace rainbow
