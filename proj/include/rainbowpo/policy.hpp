// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "rainbowpo/core.hpp"
#include "rainbowpo/rng.hpp"

namespace rainbow {

struct PolicyShape {
  int vocab = 0;     // n; token n-1 is the stop token
  int contexts = 0;  // C
  int max_len = 0;   // T_max, counting the stop token

  int states() const noexcept { return vocab + 1; }  // n tokens plus BOS
  std::size_t parameter_count() const noexcept {
    return static_cast<std::size_t>(contexts) * states() * vocab;
  }
  void validate() const;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

// Flat gradient with the same row-major layout as PolicyModel::logits().
struct GradientVector {
  std::vector<double> values;

  GradientVector() = default;
  explicit GradientVector(std::size_t dim) : values(dim, 0.0) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
};

// Context-conditioned first-order Markov softmax policy. Row (ctx, prev)
// holds the next-token logits after `prev`, where prev == vocab is BOS.
class PolicyModel {
 public:
  PolicyModel() = default;
  explicit PolicyModel(PolicyShape shape);

  // Logits i.i.d. Normal(0, stddev^2).
  static PolicyModel random(PolicyShape shape, RngStream& rng, double stddev);

  const PolicyShape& shape() const noexcept { return shape_; }
  int vocab() const noexcept { return shape_.vocab; }
  int contexts() const noexcept { return shape_.contexts; }
  int max_len() const noexcept { return shape_.max_len; }
  TokenId stop_token() const noexcept { return shape_.vocab - 1; }
  int bos_state() const noexcept { return shape_.vocab; }

  std::size_t parameter_count() const noexcept { return logits_.size(); }
  std::size_t row_offset(int ctx, int prev) const noexcept {
    return (static_cast<std::size_t>(ctx) * shape_.states() + prev) * shape_.vocab;
  }

  std::span<const double> row(int ctx, int prev) const noexcept {
    return {logits_.data() + row_offset(ctx, prev), static_cast<std::size_t>(shape_.vocab)};
  }
  std::span<double> row(int ctx, int prev) noexcept {
    return {logits_.data() + row_offset(ctx, prev), static_cast<std::size_t>(shape_.vocab)};
  }

  std::span<const double> logits() const noexcept { return logits_; }
  std::span<double> logits() noexcept { return logits_; }

  friend bool operator==(const PolicyModel&, const PolicyModel&) = default;

 private:
  PolicyShape shape_;
  std::vector<double> logits_;
};

// log(sum(exp(row))), shifted by the row max.
double log_sum_exp(std::span<const double> row) noexcept;

// out[j] = softmax(row)[j]; out.size() == row.size().
void softmax(std::span<const double> row, std::span<double> out) noexcept;

// Sum over steps of log softmax(row(ctx, prev_i))[y_i], prev_0 = BOS.
// Throws InputError for an invalid context or sequence.
double log_prob(const PolicyModel& model, int ctx, const TokenSeq& y);

// out += scale * d log_prob / d logits. No validation; callers pass
// sequences already checked by log_prob or validate_sequence.
void accumulate_grad_log_prob(const PolicyModel& model, int ctx, const TokenSeq& y,
                              double scale, std::span<double> out);

GradientVector grad_log_prob(const PolicyModel& model, int ctx, const TokenSeq& y);

// Ancestral sampling from BOS. Stops after emitting the stop token; if
// max_len - 1 tokens pass without one, the stop token is forced at position
// max_len.
TokenSeq sample(const PolicyModel& model, int ctx, RngStream& rng);

// Shannon entropy (nats) of the next-token distribution after `prev`.
double conditional_entropy(const PolicyModel& model, int ctx, int prev);

// Binary checkpoint: "RBPOPOL" magic, u32 layout version, u32 n, u32 C,
// u32 T_max, u64 parameter count, then little-endian float64 logits.
inline constexpr std::uint32_t kCheckpointLayoutVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model);
PolicyModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rainbow
