// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "rainbowpo/error.hpp"

namespace rainbow {

void DispersionConfig::validate() const {
  if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("dispersion floor must lie in (0, 1)");
}

double dispersion(const PolicyModel& ref, const PreferencePair& pair,
                  const DispersionConfig& cfg) {
  cfg.validate();
  validate_sequence(pair.yw, ref.vocab(), ref.max_len());
  validate_sequence(pair.yl, ref.vocab(), ref.max_len());
  const std::size_t n_steps = std::max(pair.yw.size(), pair.yl.size());
  if (n_steps <= 1) return 0.0;

  auto state = [](const TokenSeq& y, std::size_t i) {
    return y.tokens[std::min(i, y.size()) - 1];
  };
  double total = 0.0;
  for (std::size_t i = 1; i < n_steps; ++i) {
    total += conditional_entropy(ref, pair.ctx, state(pair.yw, i));
    total += conditional_entropy(ref, pair.ctx, state(pair.yl, i));
  }
  double denom = 2.0 * std::log(static_cast<double>(ref.vocab()));
  if (cfg.per_token_average) denom *= static_cast<double>(n_steps - 1);
  const double rho = total / denom;
  return -std::log(std::clamp(rho, cfg.floor, 1.0));
}

std::vector<double> dispersion_weights(const PolicyModel& ref,
                                       std::span<const PreferencePair> pairs,
                                       const DispersionConfig& cfg, bool enabled) {
  std::vector<double> phi(pairs.size(), 1.0);
  if (!enabled) return phi;
  cfg.validate();
  std::vector<std::exception_ptr> errors(pairs.size());
  const auto count = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      phi[i] = dispersion(ref, pairs[i], cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return phi;
}

}  // namespace rainbow
