// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rainbow {

// Mutations used to confirm that the suite can fail.
enum class CheckFault {
  None,
  LogisticSignFlip,  // evaluates the logistic link at -x
};

struct CheckOptions {
  std::uint64_t seed = 20240917;
  CheckFault fault = CheckFault::None;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Invariant suite: policy normalization and gradients, loss gradients versus
// finite differences, specialization equalities against directly coded
// objectives, mixing affinity, the ORPO bound, RS+ acceptance statistics,
// dispersion properties and serial/parallel agreement.
std::vector<CheckResult> run_checks(const CheckOptions& opts = {});

}  // namespace rainbow
