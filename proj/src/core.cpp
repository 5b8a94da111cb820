// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/core.hpp"

#include <cmath>
#include <string>

#include "rainbowpo/error.hpp"

namespace rainbow {

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::BestWorstOfK:
      return "BestWorstOfK";
    case Provenance::RejectionSampled:
      return "RejectionSampled";
    case Provenance::Loaded:
      return "Loaded";
  }
  return "Loaded";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "BestWorstOfK") return Provenance::BestWorstOfK;
  if (s == "RejectionSampled") return Provenance::RejectionSampled;
  if (s == "Loaded") return Provenance::Loaded;
  throw InputError("unknown provenance '" + std::string(s) + "'");
}

void validate_sequence(const TokenSeq& y, int vocab, int max_len) {
  if (y.empty()) throw InputError("token sequence is empty");
  if (static_cast<int>(y.size()) > max_len) {
    throw InputError("token sequence of length " + std::to_string(y.size()) +
                     " exceeds max length " + std::to_string(max_len));
  }
  for (TokenId t : y.tokens) {
    if (t < 0 || t >= vocab) {
      throw InputError("token id " + std::to_string(t) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }
}

void validate_pair(const PreferencePair& pair, int vocab, int contexts, int max_len) {
  if (pair.ctx < 0 || pair.ctx >= contexts) {
    throw InputError("context id " + std::to_string(pair.ctx) + " outside [0, " +
                     std::to_string(contexts) + ")");
  }
  validate_sequence(pair.yw, vocab, max_len);
  validate_sequence(pair.yl, vocab, max_len);
  if (pair.has_scores() && *pair.score_w < *pair.score_l) {
    throw InputError("score_w < score_l");
  }
  if (pair.offset && !std::isfinite(*pair.offset)) throw InputError("offset is not finite");
}

void validate_dataset(std::span<const PreferencePair> pairs, int vocab, int contexts,
                      int max_len) {
  if (pairs.empty()) throw InputError("dataset is empty");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      validate_pair(pairs[i], vocab, contexts, max_len);
    } catch (const InputError& e) {
      throw InputError("pair " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace rainbow
