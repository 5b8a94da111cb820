// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rainbowpo/error.hpp"

namespace rainbow {

void SamplerConfig::validate() const {
  if (k < 2) throw ConfigError("K must be >= 2");
  if (pool < 2) throw ConfigError("RS+ pool N must be >= 2");
  if (accept < 2 || accept > pool) throw ConfigError("RS+ accepted-set size M must lie in [2, N]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("RS+ temperature must be positive");
  }
  if (max_attempts < 0) throw ConfigError("RS+ attempt cap must be >= 0");
}

namespace {

struct Candidates {
  std::vector<TokenSeq> seqs;
  std::vector<double> rewards;
};

Candidates draw_candidates(const PolicyModel& policy, const RewardFn& reward, int ctx,
                           int count, const RngStream& rng) {
  RngStream stream = rng.substream(0);
  Candidates c;
  c.seqs.reserve(static_cast<std::size_t>(count));
  c.rewards.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    c.seqs.push_back(sample(policy, ctx, stream));
    c.rewards.push_back(reward(ctx, c.seqs.back()));
  }
  return c;
}

// Best and worst within `subset`, ties to the lowest candidate index.
SampledPair extreme_pair(const Candidates& c, std::vector<std::size_t> subset, int ctx) {
  std::sort(subset.begin(), subset.end());
  std::size_t best = subset.front();
  std::size_t worst = subset.front();
  for (std::size_t i : subset) {
    if (c.rewards[i] > c.rewards[best]) best = i;
    if (c.rewards[i] < c.rewards[worst]) worst = i;
  }
  SampledPair out;
  out.pair.ctx = ctx;
  out.pair.yw = c.seqs[best];
  out.pair.yl = c.seqs[worst];
  out.pair.score_w = c.rewards[best];
  out.pair.score_l = c.rewards[worst];
  out.degenerate = std::all_of(subset.begin(), subset.end(),
                               [&](std::size_t i) { return c.seqs[i] == c.seqs[subset.front()]; });
  return out;
}

}  // namespace

SampledPair best_worst_of_k(const PolicyModel& policy, const RewardFn& reward, int ctx,
                            const SamplerConfig& cfg, const RngStream& rng) {
  if (cfg.k < 2) throw ConfigError("K must be >= 2");
  const Candidates c = draw_candidates(policy, reward, ctx, cfg.k, rng);
  std::vector<std::size_t> all(c.seqs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return extreme_pair(c, std::move(all), ctx);
}

std::vector<double> percentiles(std::span<const double> rewards) {
  const std::size_t n = rewards.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });
  std::vector<double> pct(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    pct[order[rank]] = static_cast<double>(rank + 1) / static_cast<double>(n);
  }
  return pct;
}

double acceptance_probability(double percentile, double temperature) noexcept {
  return std::exp((percentile - 1.0) / temperature);
}

RsSelection rs_select(std::span<const double> percentile, const SamplerConfig& cfg,
                      RngStream& rng) {
  const std::size_t n = percentile.size();
  const auto m = std::min(static_cast<std::size_t>(cfg.accept), n);
  RsSelection sel;
  sel.first_visit.assign(n, RsSelection::Visit::NotVisited);
  std::vector<bool> taken(n, false);
  const int cap = cfg.attempt_cap();
  while (sel.accepted.size() < m && sel.attempts < cap) {
    const std::size_t i = static_cast<std::size_t>(sel.attempts) % n;
    ++sel.attempts;
    if (taken[i]) continue;
    const double u = rng.uniform();
    const bool accept = u <= acceptance_probability(percentile[i], cfg.temperature);
    if (sel.first_visit[i] == RsSelection::Visit::NotVisited) {
      sel.first_visit[i] = accept ? RsSelection::Visit::Accepted : RsSelection::Visit::Rejected;
    }
    if (accept) {
      taken[i] = true;
      sel.accepted.push_back(i);
    }
  }
  if (sel.accepted.size() < m) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) rest.push_back(i);
    }
    std::stable_sort(rest.begin(), rest.end(),
                     [&](std::size_t a, std::size_t b) { return percentile[a] > percentile[b]; });
    for (std::size_t i : rest) {
      if (sel.accepted.size() >= m) break;
      sel.accepted.push_back(i);
      ++sel.backfilled;
    }
  }
  return sel;
}

SampledPair rs_plus(const PolicyModel& policy, const RewardFn& reward, int ctx,
                    const SamplerConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const Candidates c = draw_candidates(policy, reward, ctx, cfg.pool, rng);
  const auto pct = percentiles(c.rewards);
  RngStream accept_stream = rng.substream(1);
  const RsSelection sel = rs_select(pct, cfg, accept_stream);
  return extreme_pair(c, sel.accepted, ctx);
}

}  // namespace rainbow
