// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "rainbowpo/error.hpp"

namespace rainbow {

double softplus(double z) noexcept {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LinkFunction::value(double x) const noexcept {
  switch (kind) {
    case LinkKind::Logistic:
      return softplus(-x);
    case LinkKind::Hinge:
      return std::max(0.0, delta - x);
    case LinkKind::Square:
      return (x - 0.5) * (x - 0.5);
  }
  return 0.0;
}

double LinkFunction::derivative(double x) const noexcept {
  switch (kind) {
    case LinkKind::Logistic:
      return -sigmoid(-x);
    case LinkKind::Hinge:
      return x < delta ? -1.0 : 0.0;
    case LinkKind::Square:
      return 2.0 * (x - 0.5);
  }
  return 0.0;
}

const char* to_string(LinkKind kind) noexcept {
  switch (kind) {
    case LinkKind::Logistic:
      return "logistic";
    case LinkKind::Hinge:
      return "hinge";
    case LinkKind::Square:
      return "square";
  }
  return "logistic";
}

LinkKind link_kind_from_string(const std::string& s) {
  if (s == "logistic") return LinkKind::Logistic;
  if (s == "hinge") return LinkKind::Hinge;
  if (s == "square") return LinkKind::Square;
  throw ConfigError("unknown link function '" + s + "'");
}

void RainbowConfig::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(beta) || beta <= 0.0) throw ConfigError("beta must be positive");
  if (!finite(alpha) || alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (!finite(gamma) || gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (eta != 0 && eta != 1) throw ConfigError("eta must be 0 or 1");
  if (!finite(sft_weight) || sft_weight < 0.0) throw ConfigError("sft weight must be >= 0");
  if (!finite(offset_scale) || offset_scale < 0.0) throw ConfigError("offset scale must be >= 0");
  if (!finite(length_penalty) || length_penalty < 0.0) {
    throw ConfigError("length penalty must be >= 0");
  }
  if (link.kind == LinkKind::Hinge && (!finite(link.delta) || link.delta <= 0.0)) {
    throw ConfigError("hinge delta must be positive");
  }
}

std::string describe(const RainbowConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "beta=" << cfg.beta << " alpha=" << cfg.alpha << " gamma=" << cfg.gamma
     << " eta=" << cfg.eta << " lambda=" << cfg.sft_weight
     << " sft_normalized=" << cfg.sft_normalized << " link=" << to_string(cfg.link.kind);
  if (cfg.link.kind == LinkKind::Hinge) os << "(" << cfg.link.delta << ")";
  os << " dispersion=" << cfg.use_dispersion << " pair_offset=" << cfg.use_pair_offset
     << " offset_scale=" << cfg.offset_scale << " length_penalty=" << cfg.length_penalty;
  return os.str();
}

namespace {

void check_same_shape(const PolicyModel& a, const PolicyModel& b) {
  if (a.shape() != b.shape()) throw ConfigError("policy and reference shapes differ");
}

double length_power(std::size_t len, int eta) {
  return eta == 1 ? static_cast<double>(len) : 1.0;
}

double pair_offset(const PreferencePair& pair, const RainbowConfig& cfg) {
  if (!cfg.use_pair_offset) return 0.0;
  if (pair.offset) return cfg.offset_scale * *pair.offset;
  if (!pair.has_scores()) throw InputError("pair offset enabled but pair has no scores");
  return cfg.offset_scale * (*pair.score_w - *pair.score_l);
}

// Everything one pair contributes to the loss and its gradient.
struct PairTerms {
  double inner = 0.0;
  double link_value = 0.0;
  double sft = 0.0;
  double margin = 0.0;
  double coef_w = 0.0;  // d(per-pair loss)/d log pi_theta(y_w)
  double coef_l = 0.0;
};

PairTerms pair_terms(const PolicyModel& theta, const PolicyModel& ref, const PreferencePair& p,
                     const RainbowConfig& cfg, double phi) {
  const double lw = log_prob(theta, p.ctx, p.yw);
  const double ll = log_prob(theta, p.ctx, p.yl);
  const double rw = log_prob(ref, p.ctx, p.yw);
  const double rl = log_prob(ref, p.ctx, p.yl);
  const double nw = length_power(p.yw.size(), cfg.eta);
  const double nl = length_power(p.yl.size(), cfg.eta);
  const double len_diff =
      static_cast<double>(p.yw.size()) - static_cast<double>(p.yl.size());

  PairTerms t;
  t.margin = lw / nw - ll / nl;
  t.inner = phi * (cfg.beta * t.margin - cfg.alpha * cfg.beta * (rw / nw - rl / nl) -
                   (1.0 - cfg.alpha) * cfg.gamma - pair_offset(p, cfg) -
                   cfg.length_penalty * len_diff);
  t.link_value = cfg.link.value(t.inner);
  const double fp = cfg.link.derivative(t.inner);
  const double sft_scale = cfg.sft_normalized ? 1.0 / static_cast<double>(p.yw.size()) : 1.0;
  t.sft = -lw * sft_scale;
  t.coef_w = fp * phi * cfg.beta / nw - cfg.sft_weight * sft_scale;
  t.coef_l = -fp * phi * cfg.beta / nl;
  return t;
}

bool finite_terms(const PairTerms& t) {
  return std::isfinite(t.inner) && std::isfinite(t.link_value) && std::isfinite(t.sft) &&
         std::isfinite(t.coef_w) && std::isfinite(t.coef_l);
}

void check_batch(const PolicyModel& theta, const PolicyModel& ref,
                 std::span<const PreferencePair> batch, const RainbowConfig& cfg,
                 std::span<const double> phi) {
  check_same_shape(theta, ref);
  cfg.validate();
  if (batch.empty()) throw InputError("empty batch");
  if (phi.size() != batch.size()) throw InputError("dispersion weights not aligned with batch");
  for (double v : phi) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("dispersion weight must be finite and >= 0");
  }
}

// Shared tail of the parallel and serial paths: index-ordered reduction.
class Reducer {
 public:
  Reducer(const PolicyModel& theta, std::size_t count)
      : theta_(theta), inv_(1.0 / static_cast<double>(count)) {
    report_.gradient = GradientVector(theta.parameter_count());
    report_.per_pair_inner.reserve(count);
  }

  void add(const PreferencePair& p, const PairTerms& t) {
    sum_link_ += t.link_value;
    sum_sft_ += t.sft;
    sum_margin_ += t.margin;
    report_.per_pair_inner.push_back(t.inner);
    accumulate_grad_log_prob(theta_, p.ctx, p.yw, t.coef_w * inv_, report_.gradient.values);
    accumulate_grad_log_prob(theta_, p.ctx, p.yl, t.coef_l * inv_, report_.gradient.values);
  }

  LossReport finish(double sft_weight) {
    report_.loss = sum_link_ * inv_ + sft_weight * (sum_sft_ * inv_);
    report_.mean_margin = sum_margin_ * inv_;
    return std::move(report_);
  }

 private:
  const PolicyModel& theta_;
  double inv_;
  double sum_link_ = 0.0;
  double sum_sft_ = 0.0;
  double sum_margin_ = 0.0;
  LossReport report_;
};

[[noreturn]] void throw_non_finite(std::size_t i) {
  throw NumericalError("non-finite loss term at pair " + std::to_string(i), i);
}

}  // namespace

double implicit_reward(const PolicyModel& theta, const PolicyModel& ref, int ctx,
                       const TokenSeq& y) {
  check_same_shape(theta, ref);
  return log_prob(theta, ctx, y) - log_prob(ref, ctx, y);
}

double normalized_loglik(const PolicyModel& model, int ctx, const TokenSeq& y, int eta) {
  if (eta != 0 && eta != 1) throw ConfigError("eta must be 0 or 1");
  return log_prob(model, ctx, y) / length_power(y.size(), eta);
}

double inner_argument(const PolicyModel& theta, const PolicyModel& ref,
                      const PreferencePair& pair, const RainbowConfig& cfg, double phi) {
  check_same_shape(theta, ref);
  cfg.validate();
  if (!(phi >= 0.0)) throw PreconditionError("dispersion weight must be >= 0");
  return pair_terms(theta, ref, pair, cfg, phi).inner;
}

LossReport rainbow_loss(const PolicyModel& theta, const PolicyModel& ref,
                        std::span<const PreferencePair> batch, const RainbowConfig& cfg,
                        std::span<const double> phi) {
  check_batch(theta, ref, batch, cfg, phi);
  const auto count = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<PairTerms> terms(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      terms[i] = pair_terms(theta, ref, batch[i], cfg, phi[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }

  Reducer reducer(theta, batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (!finite_terms(terms[i])) throw_non_finite(i);
    reducer.add(batch[i], terms[i]);
  }
  return reducer.finish(cfg.sft_weight);
}

namespace reference {

LossReport rainbow_loss_serial(const PolicyModel& theta, const PolicyModel& ref,
                               std::span<const PreferencePair> batch,
                               const RainbowConfig& cfg, std::span<const double> phi) {
  check_batch(theta, ref, batch, cfg, phi);
  Reducer reducer(theta, batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PairTerms t = pair_terms(theta, ref, batch[i], cfg, phi[i]);
    if (!finite_terms(t)) throw_non_finite(i);
    reducer.add(batch[i], t);
  }
  return reducer.finish(cfg.sft_weight);
}

}  // namespace reference

double normalized_likelihood(const PolicyModel& model, int ctx, const TokenSeq& y) {
  return std::exp(normalized_loglik(model, ctx, y, 1));
}

namespace {

struct OddsTerm {
  double log_odds = 0.0;
  double dlog_odds = 0.0;  // d log_odds / d log p; zero when clamped
  bool clamped = false;
};

OddsTerm odds_term(double log_p) {
  OddsTerm o;
  double p = std::exp(log_p);
  if (p < kOrpoClamp || p > 1.0 - kOrpoClamp) {
    p = std::clamp(p, kOrpoClamp, 1.0 - kOrpoClamp);
    log_p = std::log(p);
    o.clamped = true;
  }
  o.log_odds = log_p - std::log1p(-p);
  o.dlog_odds = o.clamped ? 0.0 : 1.0 / (1.0 - p);
  return o;
}

}  // namespace

LossReport orpo_loss(const PolicyModel& theta, std::span<const PreferencePair> batch,
                     double lambda) {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("ORPO lambda must be >= 0");
  if (batch.empty()) throw InputError("empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossReport report;
  report.gradient = GradientVector(theta.parameter_count());
  report.per_pair_inner.reserve(batch.size());
  double sum_loss = 0.0;
  double sum_margin = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    const double lw = log_prob(theta, p.ctx, p.yw);
    const double ll = log_prob(theta, p.ctx, p.yl);
    const double nw = static_cast<double>(p.yw.size());
    const double nl = static_cast<double>(p.yl.size());
    const double uw = lw / nw;
    const double ul = ll / nl;
    const OddsTerm ow = odds_term(uw);
    const OddsTerm ol = odds_term(ul);
    report.clamp_count += static_cast<std::size_t>(ow.clamped) + static_cast<std::size_t>(ol.clamped);
    const double z = ow.log_odds - ol.log_odds;
    const double term = -uw + lambda * softplus(-z);
    if (!std::isfinite(term)) throw_non_finite(i);
    sum_loss += term;
    sum_margin += uw - ul;
    report.per_pair_inner.push_back(z);
    const double dz = -lambda * sigmoid(-z);  // d(lambda * softplus(-z)) / dz
    const double d_uw = -1.0 + dz * ow.dlog_odds;
    const double d_ul = -dz * ol.dlog_odds;
    accumulate_grad_log_prob(theta, p.ctx, p.yw, d_uw / nw * inv, report.gradient.values);
    accumulate_grad_log_prob(theta, p.ctx, p.yl, d_ul / nl * inv, report.gradient.values);
  }
  report.loss = sum_loss * inv;
  report.mean_margin = sum_margin * inv;
  return report;
}

OrpoBound orpo_po_bound(double p_w, double p_l) {
  if (!(p_w > 0.0 && p_w < 1.0 && p_l > 0.0 && p_l < 1.0)) {
    throw PreconditionError("likelihoods must lie in (0, 1)");
  }
  const double delta = std::log(p_w) - std::log(p_l);
  if (delta < 0.0) throw PreconditionError("bound requires log p_w - log p_l >= 0");
  const double z = (std::log(p_w) - std::log1p(-p_w)) - (std::log(p_l) - std::log1p(-p_l));
  return {softplus(-z), softplus(-delta / (1.0 - p_l))};
}

}  // namespace rainbow
