// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/policy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <type_traits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "rainbowpo/error.hpp"

namespace rainbow {

void PolicyShape::validate() const {
  if (vocab < 2) throw ConfigError("vocabulary must hold the stop token and at least one other");
  if (contexts < 1) throw ConfigError("context count must be positive");
  if (max_len < 1) throw ConfigError("max length must be positive");
}

PolicyModel::PolicyModel(PolicyShape shape) : shape_(shape) {
  shape_.validate();
  logits_.assign(shape_.parameter_count(), 0.0);
}

PolicyModel PolicyModel::random(PolicyShape shape, RngStream& rng, double stddev) {
  PolicyModel m(shape);
  for (double& v : m.logits_) v = stddev * rng.normal();
  return m;
}

double log_sum_exp(std::span<const double> row) noexcept {
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double x : row) s += std::exp(x - mx);
  return mx + std::log(s);
}

void softmax(std::span<const double> row, std::span<double> out) noexcept {
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = std::exp(row[j] - mx);
    s += out[j];
  }
  for (std::size_t j = 0; j < row.size(); ++j) out[j] /= s;
}

namespace {

void check_ctx(const PolicyModel& model, int ctx) {
  if (ctx < 0 || ctx >= model.contexts()) {
    throw InputError("context id " + std::to_string(ctx) + " outside [0, " +
                     std::to_string(model.contexts()) + ")");
  }
}

}  // namespace

double log_prob(const PolicyModel& model, int ctx, const TokenSeq& y) {
  check_ctx(model, ctx);
  validate_sequence(y, model.vocab(), model.max_len());
  double total = 0.0;
  int prev = model.bos_state();
  for (TokenId t : y.tokens) {
    const auto r = model.row(ctx, prev);
    total += r[t] - log_sum_exp(r);
    prev = t;
  }
  return total;
}

void accumulate_grad_log_prob(const PolicyModel& model, int ctx, const TokenSeq& y,
                              double scale, std::span<double> out) {
  const auto n = static_cast<std::size_t>(model.vocab());
  std::vector<double> p(n);
  int prev = model.bos_state();
  for (TokenId t : y.tokens) {
    softmax(model.row(ctx, prev), p);
    double* g = out.data() + model.row_offset(ctx, prev);
    for (std::size_t j = 0; j < n; ++j) {
      g[j] += scale * ((static_cast<TokenId>(j) == t ? 1.0 : 0.0) - p[j]);
    }
    prev = t;
  }
}

GradientVector grad_log_prob(const PolicyModel& model, int ctx, const TokenSeq& y) {
  check_ctx(model, ctx);
  validate_sequence(y, model.vocab(), model.max_len());
  GradientVector g(model.parameter_count());
  accumulate_grad_log_prob(model, ctx, y, 1.0, g.values);
  return g;
}

TokenSeq sample(const PolicyModel& model, int ctx, RngStream& rng) {
  check_ctx(model, ctx);
  const auto n = static_cast<std::size_t>(model.vocab());
  const TokenId stop = model.stop_token();
  std::vector<double> p(n);
  TokenSeq y;
  y.tokens.reserve(static_cast<std::size_t>(model.max_len()));
  int prev = model.bos_state();
  for (int pos = 1; pos <= model.max_len(); ++pos) {
    if (pos == model.max_len()) {
      y.tokens.push_back(stop);
      break;
    }
    softmax(model.row(ctx, prev), p);
    const double u = rng.uniform();
    double cum = 0.0;
    TokenId pick = -1;
    for (std::size_t j = 0; j < n; ++j) {
      cum += p[j];
      if (u < cum) {
        pick = static_cast<TokenId>(j);
        break;
      }
    }
    if (pick < 0) {
      // u landed in the rounding slack above the final cumulative sum
      for (std::size_t j = n; j-- > 0;) {
        if (p[j] > 0.0) {
          pick = static_cast<TokenId>(j);
          break;
        }
      }
    }
    y.tokens.push_back(pick);
    if (pick == stop) break;
    prev = pick;
  }
  return y;
}

double conditional_entropy(const PolicyModel& model, int ctx, int prev) {
  check_ctx(model, ctx);
  if (prev < 0 || prev > model.bos_state()) {
    throw InputError("previous-token state " + std::to_string(prev) + " out of range");
  }
  const auto r = model.row(ctx, prev);
  const double lse = log_sum_exp(r);
  double h = 0.0;
  for (double x : r) {
    const double lp = x - lse;
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(model.vocab())));
}

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'B', 'P', 'O', 'P', 'O', 'L', '\0'};

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    os.put(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw InputError("truncated checkpoint");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kCheckpointLayoutVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.vocab()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.contexts()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.max_len()));
  put_le<std::uint64_t>(os, model.parameter_count());
  for (double v : model.logits()) put_le<double>(os, v);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

PolicyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint '" + path.string() + "'");
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw InputError("'" + path.string() + "' is not a policy checkpoint");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointLayoutVersion) {
    throw InputError("unsupported checkpoint layout version " + std::to_string(version));
  }
  PolicyShape shape;
  shape.vocab = static_cast<int>(get_le<std::uint32_t>(is));
  shape.contexts = static_cast<int>(get_le<std::uint32_t>(is));
  shape.max_len = static_cast<int>(get_le<std::uint32_t>(is));
  const auto count = get_le<std::uint64_t>(is);
  PolicyModel model(shape);
  if (count != model.parameter_count()) throw InputError("checkpoint parameter count mismatch");
  for (double& v : model.logits()) v = get_le<double>(is);
  return model;
}

}  // namespace rainbow
