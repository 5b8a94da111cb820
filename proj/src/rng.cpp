// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/rng.hpp"

#include <cmath>
#include <numbers>

namespace rainbow {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// murmur3 / splitmix64 finalizer
constexpr std::uint64_t fmix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) noexcept {
  return fmix64(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

}  // namespace

std::uint64_t RngStream::next_u64() noexcept {
  const std::uint64_t key = combine(fmix64(seed_ + kGolden), stream_);
  return fmix64(combine(key, counter_++));
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
  // 1 - u lies in (0, 1], keeping the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t bound) noexcept {
  // Rejection keeps the result unbiased for bounds that do not divide 2^64.
  const std::uint64_t limit = -bound % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= limit) return r % bound;
  }
}

RngStream RngStream::substream(std::uint64_t label) const noexcept {
  return RngStream(seed_, combine(combine(stream_ ^ 0xA5A5A5A5A5A5A5A5ULL, label), seed_));
}

}  // namespace rainbow
