// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/synth.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>

#include "rainbowpo/error.hpp"
#include "rainbowpo/losses.hpp"

namespace rainbow {

SyntheticReward SyntheticReward::random(int contexts, int vocab, double length_bias,
                                        std::uint64_t seed) {
  if (contexts < 1 || vocab < 2) throw ConfigError("reward dimensions must be positive");
  if (!std::isfinite(length_bias)) throw ConfigError("length bias must be finite");
  SyntheticReward r;
  r.contexts = contexts;
  r.vocab = vocab;
  r.length_bias = length_bias;
  r.seed = seed;
  RngStream rng = RngStream(seed).substream(kRewardStream);
  r.token_scores.resize(static_cast<std::size_t>(contexts) * vocab);
  for (double& s : r.token_scores) s = rng.normal();
  return r;
}

double SyntheticReward::operator()(int ctx, const TokenSeq& y) const {
  if (ctx < 0 || ctx >= contexts) throw InputError("reward context out of range");
  const double* row = token_scores.data() + static_cast<std::size_t>(ctx) * vocab;
  double total = 0.0;
  for (TokenId t : y.tokens) {
    if (t < 0 || t >= vocab) throw InputError("reward token out of range");
    total += row[t];
  }
  return total + length_bias * static_cast<double>(y.size());
}

std::string SyntheticReward::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(contexts));
  mix(static_cast<std::uint64_t>(vocab));
  mix(std::bit_cast<std::uint64_t>(length_bias));
  mix(seed);
  for (double s : token_scores) mix(std::bit_cast<std::uint64_t>(s));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RewardFn SyntheticReward::as_fn() const {
  return [this](int ctx, const TokenSeq& y) { return (*this)(ctx, y); };
}

double bt_preference_prob(double r_w, double r_l, double gamma_world) noexcept {
  return sigmoid(r_w - r_l - gamma_world);
}

const char* to_string(PairMethod m) noexcept {
  return m == PairMethod::RSPlus ? "rs_plus" : "best_worst";
}

PairMethod pair_method_from_string(const std::string& s) {
  if (s == "best_worst") return PairMethod::BestWorstOfK;
  if (s == "rs_plus") return PairMethod::RSPlus;
  throw ConfigError("unknown pair method '" + s + "' (expected best_worst or rs_plus)");
}

namespace {

void check_generation(const PolicyModel& ref, const SyntheticReward& reward, int prompts,
                      PairMethod method, const SamplerConfig& cfg) {
  if (prompts < 1) throw ConfigError("prompt count must be >= 1");
  if (reward.contexts != ref.contexts() || reward.vocab != ref.vocab()) {
    throw ConfigError("reward and policy dimensions differ");
  }
  if (method == PairMethod::RSPlus) {
    cfg.validate();
  } else if (cfg.k < 2) {
    throw ConfigError("K must be >= 2");
  }
}

PreferencePair generate_one(const PolicyModel& ref, const SyntheticReward& reward, int p,
                            PairMethod method, const SamplerConfig& cfg, const RngStream& rng) {
  const int ctx = p % ref.contexts();
  const RngStream sub = rng.substream(static_cast<std::uint64_t>(p));
  const RewardFn fn = reward.as_fn();
  return method == PairMethod::RSPlus ? rs_plus(ref, fn, ctx, cfg, sub).pair
                                      : best_worst_of_k(ref, fn, ctx, cfg, sub).pair;
}

Provenance provenance_of(PairMethod method) {
  return method == PairMethod::RSPlus ? Provenance::RejectionSampled : Provenance::BestWorstOfK;
}

struct Draw {
  double win = 0.0;
  double length = 0.0;
  double reward = 0.0;
};

Draw eval_draw(const PolicyModel& theta, const PolicyModel& ref, const SyntheticReward& reward,
               int i, const RngStream& rng) {
  const int ctx = i % theta.contexts();
  const RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
  RngStream s_theta = sub.substream(0);
  RngStream s_ref = sub.substream(1);
  const TokenSeq y_theta = sample(theta, ctx, s_theta);
  const TokenSeq y_ref = sample(ref, ctx, s_ref);
  const double r_theta = reward(ctx, y_theta);
  const double r_ref = reward(ctx, y_ref);
  Draw d;
  d.win = r_theta > r_ref ? 1.0 : (r_theta == r_ref ? 0.5 : 0.0);
  d.length = static_cast<double>(y_theta.size());
  d.reward = r_theta;
  return d;
}

void check_eval(const PolicyModel& theta, const PolicyModel& ref, const SyntheticReward& reward,
                int n_eval) {
  if (n_eval < 1) throw ConfigError("n_eval must be >= 1");
  if (theta.shape() != ref.shape()) throw ConfigError("policy and reference shapes differ");
  if (reward.contexts != ref.contexts() || reward.vocab != ref.vocab()) {
    throw ConfigError("reward and policy dimensions differ");
  }
}

EvalReport finish_eval(const PolicyModel& theta, const PolicyModel& ref,
                       std::span<const PreferencePair> held_out, std::span<const Draw> draws) {
  EvalReport rep;
  rep.n_eval = draws.size();
  double wins = 0.0, len = 0.0, rew = 0.0;
  for (const Draw& d : draws) {
    wins += d.win;
    len += d.length;
    rew += d.reward;
  }
  const double inv = 1.0 / static_cast<double>(draws.size());
  rep.win_rate = wins * inv;
  rep.avg_length = len * inv;
  rep.mean_reward = rew * inv;

  rep.n_heldout = held_out.size();
  std::size_t correct = 0;
  for (const auto& p : held_out) {
    const double rw = implicit_reward(theta, ref, p.ctx, p.yw);
    const double rl = implicit_reward(theta, ref, p.ctx, p.yl);
    if (rw > rl) ++correct;
    if (rw == rl) ++rep.pairwise_ties;
  }
  rep.pairwise_accuracy =
      held_out.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(held_out.size());
  return rep;
}

}  // namespace

PreferenceDataset generate_dataset(const PolicyModel& ref, const SyntheticReward& reward,
                                   int prompts, PairMethod method, const SamplerConfig& cfg,
                                   const RngStream& rng) {
  check_generation(ref, reward, prompts, method, cfg);
  PreferenceDataset ds;
  ds.provenance = provenance_of(method);
  ds.pairs.resize(static_cast<std::size_t>(prompts));
  std::vector<std::exception_ptr> errors(ds.pairs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int p = 0; p < prompts; ++p) {
    try {
      ds.pairs[p] = generate_one(ref, reward, p, method, cfg, rng);
    } catch (...) {
      errors[p] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return ds;
}

EvalReport evaluate(const PolicyModel& theta, const PolicyModel& ref,
                    const SyntheticReward& reward, std::span<const PreferencePair> held_out,
                    int n_eval, const RngStream& rng) {
  check_eval(theta, ref, reward, n_eval);
  std::vector<Draw> draws(static_cast<std::size_t>(n_eval));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_eval; ++i) draws[i] = eval_draw(theta, ref, reward, i, rng);
  return finish_eval(theta, ref, held_out, draws);
}

DatasetSplit split_holdout(std::span<const PreferencePair> pairs, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pairs.size())));
  if (held >= pairs.size()) throw ConfigError("holdout leaves no training pairs");
  DatasetSplit split;
  split.train.assign(pairs.begin(), pairs.end() - static_cast<std::ptrdiff_t>(held));
  split.held_out.assign(pairs.end() - static_cast<std::ptrdiff_t>(held), pairs.end());
  return split;
}

namespace reference {

PreferenceDataset generate_dataset_serial(const PolicyModel& ref, const SyntheticReward& reward,
                                          int prompts, PairMethod method,
                                          const SamplerConfig& cfg, const RngStream& rng) {
  check_generation(ref, reward, prompts, method, cfg);
  PreferenceDataset ds;
  ds.provenance = provenance_of(method);
  for (int p = 0; p < prompts; ++p) ds.pairs.push_back(generate_one(ref, reward, p, method, cfg, rng));
  return ds;
}

EvalReport evaluate_serial(const PolicyModel& theta, const PolicyModel& ref,
                           const SyntheticReward& reward,
                           std::span<const PreferencePair> held_out, int n_eval,
                           const RngStream& rng) {
  check_eval(theta, ref, reward, n_eval);
  std::vector<Draw> draws;
  for (int i = 0; i < n_eval; ++i) draws.push_back(eval_draw(theta, ref, reward, i, rng));
  return finish_eval(theta, ref, held_out, draws);
}

}  // namespace reference

}  // namespace rainbow
