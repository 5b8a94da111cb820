// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/policy.hpp"

namespace rainbow {

enum class LinkKind { Logistic, Hinge, Square };

// Loss-shaped link applied to the preference argument x:
//   Logistic  f(x) = -log sigmoid(x)
//   Hinge     f(x) = max(0, delta - x)
//   Square    f(x) = (x - 1/2)^2
struct LinkFunction {
  LinkKind kind = LinkKind::Logistic;
  double delta = 1.0;  // hinge margin only

  static LinkFunction logistic() noexcept { return {LinkKind::Logistic, 1.0}; }
  static LinkFunction hinge(double delta) noexcept { return {LinkKind::Hinge, delta}; }
  static LinkFunction square() noexcept { return {LinkKind::Square, 1.0}; }

  double value(double x) const noexcept;
  // Hinge uses subgradient 0 at the kink x == delta.
  double derivative(double x) const noexcept;

  friend bool operator==(const LinkFunction&, const LinkFunction&) = default;
};

const char* to_string(LinkKind kind) noexcept;
LinkKind link_kind_from_string(const std::string& s);

// Numerically stable log(1 + exp(z)).
double softplus(double z) noexcept;
double sigmoid(double x) noexcept;

struct RainbowConfig {
  double beta = 10.0;           // regularization strength
  double alpha = 0.25;          // reference-mixing weight; 1 = DPO reference, 0 = SimPO
  double gamma = 0.1;           // target margin, applied as (1 - alpha) * gamma
  int eta = 1;                  // length-normalization exponent, 0 or 1
  double sft_weight = 0.0;      // lambda
  bool sft_normalized = false;  // SFT on log p (per-token) instead of log pi
  LinkFunction link;
  bool use_dispersion = true;
  bool use_pair_offset = false;
  double offset_scale = 0.0;    // c in Delta_r = c * (score_w - score_l)
  double length_penalty = 0.0;  // kappa of r^LR = r - kappa |y|

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const RainbowConfig&, const RainbowConfig&) = default;
};

// One-line human-readable dump, used in error messages.
std::string describe(const RainbowConfig& cfg);

struct LossReport {
  double loss = 0.0;
  GradientVector gradient;
  std::vector<double> per_pair_inner;  // link argument per pair
  double mean_margin = 0.0;            // mean l_theta(y_w) - l_theta(y_l)
  std::size_t clamp_count = 0;         // ORPO likelihood clamps
};

// log pi_theta(y|x) - log pi_ref(y|x). Throws ConfigError on shape mismatch.
double implicit_reward(const PolicyModel& theta, const PolicyModel& ref, int ctx,
                       const TokenSeq& y);

// log pi(y|x) / |y|^eta.
double normalized_loglik(const PolicyModel& model, int ctx, const TokenSeq& y, int eta);

// phi * [ beta (l_th(y_w) - l_th(y_l)) - alpha beta (l_ref(y_w) - l_ref(y_l))
//         - (1 - alpha) gamma - Delta_r - kappa (|y_w| - |y_l|) ]
double inner_argument(const PolicyModel& theta, const PolicyModel& ref,
                      const PreferencePair& pair, const RainbowConfig& cfg, double phi);

// mean_p f(inner_p) + lambda * mean_p(-log pi_theta(y_w)) with its exact
// gradient in theta's logits. Per-pair terms run in parallel; reductions are
// in pair-index order so the result is bit-identical to
// reference::rainbow_loss_serial. `phi` is aligned with `batch`.
LossReport rainbow_loss(const PolicyModel& theta, const PolicyModel& ref,
                        std::span<const PreferencePair> batch, const RainbowConfig& cfg,
                        std::span<const double> phi);

// exp(log pi(y|x) / |y|), the per-token geometric-mean likelihood.
double normalized_likelihood(const PolicyModel& model, int ctx, const TokenSeq& y);

// Likelihoods are clamped to [1e-12, 1 - 1e-12] before forming odds.
inline constexpr double kOrpoClamp = 1e-12;

LossReport orpo_loss(const PolicyModel& theta, std::span<const PreferencePair> batch,
                     double lambda);

struct OrpoBound {
  double po_term = 0.0;
  double bound = 0.0;
};

// ORPO odds-ratio term and its length-normalized upper bound
// -log sigmoid(Delta / (1 - p_l)), Delta = log p_w - log p_l.
// Throws PreconditionError unless p_w, p_l in (0,1) and Delta >= 0.
OrpoBound orpo_po_bound(double p_w, double p_l);

namespace reference {

// Single-threaded evaluation of rainbow_loss, kept as the baseline for the
// parallel kernel.
LossReport rainbow_loss_serial(const PolicyModel& theta, const PolicyModel& ref,
                               std::span<const PreferencePair> batch,
                               const RainbowConfig& cfg, std::span<const double> phi);

}  // namespace reference

}  // namespace rainbow
