// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace rainbow {

using TokenId = std::int32_t;

// A generated response. By convention the final token is the stop token
// (vocab - 1) and the length counts it, so length normalization never
// divides by zero.
struct TokenSeq {
  std::vector<TokenId> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  TokenId operator[](std::size_t i) const { return tokens[i]; }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

struct PreferencePair {
  int ctx = 0;
  TokenSeq yw;  // preferred
  TokenSeq yl;  // dispreferred
  std::optional<double> score_w;
  std::optional<double> score_l;
  std::optional<double> offset;

  bool has_scores() const noexcept { return score_w.has_value() && score_l.has_value(); }

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class Provenance { BestWorstOfK, RejectionSampled, Loaded };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  Provenance provenance = Provenance::Loaded;

  std::size_t size() const noexcept { return pairs.size(); }

  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;
};

// Throws InputError unless 1 <= |y| <= max_len and every id is in [0, vocab).
void validate_sequence(const TokenSeq& y, int vocab, int max_len);

// Sequence checks for both responses plus ctx range, score ordering and a
// finite offset.
void validate_pair(const PreferencePair& pair, int vocab, int contexts, int max_len);

// Non-empty and every pair valid for the given world dimensions.
void validate_dataset(std::span<const PreferencePair> pairs, int vocab, int contexts,
                      int max_len);

}  // namespace rainbow
