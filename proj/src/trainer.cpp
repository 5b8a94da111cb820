// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/trainer.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

#include "rainbowpo/error.hpp"
#include "rainbowpo/rng.hpp"

namespace rainbow {

const char* to_string(OptimizerKind k) noexcept {
  return k == OptimizerKind::SGD ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("learning rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!std::isfinite(warmup) || warmup < 0.0) throw ConfigError("warm-up must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max grad norm must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be >= 0");
}

std::size_t steps_per_epoch(std::size_t pairs, int batch_size) noexcept {
  const auto b = static_cast<std::size_t>(batch_size);
  return (pairs + b - 1) / b;
}

int warmup_steps(const TrainConfig& cfg, int total_steps) {
  if (cfg.warmup >= 1.0) return static_cast<int>(cfg.warmup);
  // The slack absorbs representation error, e.g. 0.1 * 1500.
  return static_cast<int>(std::ceil(cfg.warmup * total_steps - 1e-9));
}

double lr_at_step(const TrainConfig& cfg, int step, int total_steps) {
  const int w = warmup_steps(cfg, total_steps);
  if (w >= total_steps) {
    throw ConfigError("warm-up of " + std::to_string(w) + " steps does not fit in " +
                      std::to_string(total_steps) + " total steps");
  }
  if (step < 0 || step >= total_steps) throw ConfigError("step outside [0, total_steps)");
  if (step < w) return cfg.lr * static_cast<double>(step) / static_cast<double>(w);
  return cfg.lr;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng = RngStream(seed).substream(kShuffleStream).substream(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t dim) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::Adam) {
      m_.assign(dim, 0.0);
      v_.assign(dim, 0.0);
    }
  }

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      return;
    }
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long t_ = 0;
};

void clip(std::vector<double>& g, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
}

}  // namespace

TrainResult train(const PolicyModel& theta_init, const PolicyModel& ref,
                  std::span<const PreferencePair> data, const RainbowConfig& loss_cfg,
                  const TrainConfig& train_cfg, const DispersionConfig& disp_cfg,
                  const EpochCallback& on_epoch) {
  loss_cfg.validate();
  train_cfg.validate();
  if (theta_init.shape() != ref.shape()) throw ConfigError("policy and reference shapes differ");
  if (data.empty()) throw InputError("training set is empty");

  const std::vector<double> phi =
      dispersion_weights(ref, data, disp_cfg, loss_cfg.use_dispersion);
  const std::size_t spe = steps_per_epoch(data.size(), train_cfg.batch_size);
  const int total = static_cast<int>(spe) * train_cfg.epochs;
  lr_at_step(train_cfg, 0, total);  // rejects a warm-up longer than the run

  TrainResult result{theta_init, {}};
  result.loss_trace.reserve(static_cast<std::size_t>(total));
  Optimizer opt(train_cfg, theta_init.parameter_count());
  std::vector<PreferencePair> batch;
  std::vector<double> batch_phi;
  int step = 0;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), train_cfg.seed, epoch);
    const std::size_t epoch_begin = result.loss_trace.size();
    for (std::size_t s = 0; s < spe; ++s, ++step) {
      const std::size_t lo = s * static_cast<std::size_t>(train_cfg.batch_size);
      const std::size_t hi = std::min(lo + static_cast<std::size_t>(train_cfg.batch_size), data.size());
      batch.clear();
      batch_phi.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(data[order[k]]);
        batch_phi.push_back(phi[order[k]]);
      }
      LossReport rep;
      try {
        rep = rainbow_loss(result.policy, ref, batch, loss_cfg, batch_phi);
      } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(step) + ": " + e.what() + " [" +
                                 describe(loss_cfg) + "]",
                             static_cast<std::size_t>(step));
      }
      if (!std::isfinite(rep.loss)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step) + " [" +
                                 describe(loss_cfg) + "]",
                             static_cast<std::size_t>(step));
      }
      clip(rep.gradient.values, train_cfg.max_grad_norm);
      opt.step(result.policy.logits(), rep.gradient.values, lr_at_step(train_cfg, step, total));
      result.loss_trace.push_back(rep.loss);
    }
    if (on_epoch) {
      on_epoch(epoch + 1, result.policy,
               std::span<const double>(result.loss_trace).subspan(epoch_begin));
    }
  }
  return result;
}

}  // namespace rainbow
