// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace rainbow {

// Counter-based random stream. Draw k of stream (seed, id) is a pure function
// of (seed, id, k), so any worker can reproduce any stream without sharing
// state. Distributions are implemented here rather than with <random>
// adaptors, whose algorithms differ between standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t position() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  // Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Child stream keyed by (seed, stream id, label); the parent's position is
  // irrelevant, so children can be derived before or after drawing.
  RngStream substream(std::uint64_t label) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

inline RngStream substream(const RngStream& parent, std::uint64_t label) noexcept {
  return parent.substream(label);
}

// Fixed labels for the top-level streams of an experiment.
enum StreamLabel : std::uint64_t {
  kRefPolicyStream = 1,
  kRewardStream = 2,
  kDatasetStream = 3,
  kEvalStream = 4,
  kPolicyInitStream = 5,
  kShuffleStream = 6,
  kCheckStream = 7,
};

}  // namespace rainbow
