// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "rainbowpo/error.hpp"
#include "rainbowpo/policy.hpp"
#include "support/oracles.hpp"

using namespace rainbow;

TEST_CASE("log_prob: uniform rows and a hand softmax") {
  const PolicyModel uniform(PolicyShape{4, 1, 5});
  CHECK(log_prob(uniform, 0, TokenSeq{{0, 1, 3}}) == doctest::Approx(-4.158883083359672).epsilon(1e-12));

  PolicyModel m(PolicyShape{4, 1, 5});
  m.row(0, m.bos_state())[3] = std::log(3.0);
  CHECK(log_prob(m, 0, TokenSeq{{3}}) == doctest::Approx(-std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("log_prob: invalid input") {
  const PolicyModel m(PolicyShape{4, 2, 5});
  CHECK_THROWS_AS(log_prob(m, 0, TokenSeq{}), InputError);
  CHECK_THROWS_AS(log_prob(m, 0, TokenSeq{{4}}), InputError);
  CHECK_THROWS_AS(log_prob(m, 2, TokenSeq{{3}}), InputError);
  CHECK_THROWS_AS(log_prob(m, 0, TokenSeq{{0, 0, 0, 0, 0, 3}}), InputError);
}

TEST_CASE("log_prob matches the unshifted oracle") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto f = oracle::fixture(s, 3);
    for (const auto& p : f.batch) {
      CHECK(std::abs(log_prob(f.theta, p.ctx, p.yw) - oracle::log_prob(f.theta, p.ctx, p.yw)) < 1e-12);
    }
  }
}

TEST_CASE("rows are normalized") {
  RngStream r(8);
  const PolicyModel m = PolicyModel::random(PolicyShape{7, 3, 5}, r, 3.0);
  std::vector<double> p(7);
  for (int c = 0; c < 3; ++c) {
    for (int prev = 0; prev <= 7; ++prev) {
      softmax(m.row(c, prev), p);
      double s = 0.0;
      for (double v : p) s += v;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("grad_log_prob: one-hot minus softmax, locality") {
  const PolicyModel m(PolicyShape{4, 2, 5});
  const GradientVector g = grad_log_prob(m, 1, TokenSeq{{2}});
  const auto off = m.row_offset(1, m.bos_state());
  CHECK(g[off + 0] == doctest::Approx(-0.25));
  CHECK(g[off + 1] == doctest::Approx(-0.25));
  CHECK(g[off + 2] == doctest::Approx(0.75));
  CHECK(g[off + 3] == doctest::Approx(-0.25));
  for (std::size_t i = 0; i < m.row_offset(1, 0); ++i) CHECK(g[i] == 0.0);  // context 0
}

TEST_CASE("grad_log_prob matches finite differences on 100 instances") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto f = oracle::fixture(1000 + s, 1, PolicyShape{3 + static_cast<int>(s % 4), 2, 6});
    const auto& p = f.batch[0];
    const auto g = grad_log_prob(f.theta, p.ctx, p.yw);
    const auto fd = oracle::fd_gradient(f.theta, [&](const PolicyModel& m) { return log_prob(m, p.ctx, p.yw); });
    worst = std::max(worst, oracle::max_rel_error(g.values, fd));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("repeated rows accumulate") {
  PolicyModel m(PolicyShape{3, 1, 6});
  const TokenSeq y{{0, 0, 0, 2}};
  const auto g = grad_log_prob(m, 0, y);
  // Row after token 0 is used twice (for the 2nd and 3rd tokens equal to 0)
  // and once more for the stop token.
  const auto off = m.row_offset(0, 0);
  CHECK(g[off + 0] == doctest::Approx(2.0 - 3.0 / 3.0));
  CHECK(g[off + 2] == doctest::Approx(1.0 - 3.0 / 3.0));
}

TEST_CASE("enumerated mass is at most one and equals the stop probability") {
  for (int n : {2, 3}) {
    for (int t_max : {1, 2, 3, 4}) {
      RngStream r(static_cast<std::uint64_t>(n * 10 + t_max));
      const PolicyModel m = PolicyModel::random(PolicyShape{n, 1, t_max}, r, 1.5);
      double mass = 0.0;
      for (const auto& y : oracle::enumerate_terminated(n, t_max)) mass += std::exp(log_prob(m, 0, y));
      CHECK(mass <= 1.0 + 1e-12);
      CHECK(std::abs(mass - oracle::stop_within(m, 0)) < 1e-12);
    }
  }
  // A stop-only world puts all its mass on the one-token sequence.
  PolicyModel stop_only(PolicyShape{3, 1, 4});
  for (int prev = 0; prev <= 3; ++prev) stop_only.row(0, prev)[2] = 800.0;
  double mass = 0.0;
  for (const auto& y : oracle::enumerate_terminated(3, 4)) mass += std::exp(log_prob(stop_only, 0, y));
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample: determinism, forced stop and step frequencies") {
  PolicyModel det(PolicyShape{4, 1, 6});
  det.row(0, det.bos_state())[1] = 1e6;
  det.row(0, 1)[2] = 1e6;
  det.row(0, 2)[3] = 1e6;
  RngStream r(1);
  CHECK(sample(det, 0, r) == TokenSeq{{1, 2, 3}});

  PolicyModel never_stop(PolicyShape{4, 1, 5});
  for (int prev = 0; prev <= 4; ++prev) never_stop.row(0, prev)[3] = -1e6;
  const TokenSeq y = sample(never_stop, 0, r);
  CHECK(y.size() == 5);
  CHECK(y.tokens.back() == 3);

  RngStream a(77, 3);
  RngStream b(77, 3);
  RngStream seed_rng(3);
  const PolicyModel m = PolicyModel::random(PolicyShape{5, 2, 8}, seed_rng, 1.0);
  for (int i = 0; i < 50; ++i) CHECK(sample(m, i % 2, a) == sample(m, i % 2, b));

  constexpr int kDraws = 100000;
  std::vector<int> counts(5, 0);
  RngStream s(5);
  for (int i = 0; i < kDraws; ++i) ++counts[sample(m, 1, s).tokens[0]];
  for (int t = 0; t < 5; ++t) {
    const double p = oracle::step_prob(m, 1, m.bos_state(), t);
    const double sigma = std::sqrt(p * (1 - p) / kDraws);
    CHECK(std::abs(counts[t] / static_cast<double>(kDraws) - p) <= 3 * sigma);
  }
}

TEST_CASE("conditional_entropy") {
  const PolicyModel u(PolicyShape{4, 1, 3});
  CHECK(conditional_entropy(u, 0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  PolicyModel d(PolicyShape{4, 1, 3});
  d.row(0, 0)[1] = 50.0;
  CHECK(conditional_entropy(d, 0, 0) <= 1e-10);
  PolicyModel two(PolicyShape{2, 1, 3});
  two.row(0, 0)[0] = 0.0;
  two.row(0, 0)[1] = std::log(3.0);
  CHECK(conditional_entropy(two, 0, 0) == doctest::Approx(0.5623351446188083).epsilon(1e-12));
  RngStream r(4);
  const PolicyModel m = PolicyModel::random(PolicyShape{6, 2, 4}, r, 5.0);
  for (int c = 0; c < 2; ++c) {
    for (int prev = 0; prev <= 6; ++prev) {
      const double h = conditional_entropy(m, c, prev);
      CHECK(h >= 0.0);
      CHECK(h <= std::log(6.0));
      CHECK(std::abs(h - oracle::entropy(m, c, prev)) < 1e-12);
    }
  }
}

TEST_CASE("checkpoint round-trip and header checks") {
  RngStream r(12);
  const PolicyModel m = PolicyModel::random(PolicyShape{5, 3, 7}, r, 1.0);
  const auto path = std::filesystem::temp_directory_path() / "rainbow_test_policy.ckpt";
  save_checkpoint(path, m);
  CHECK(load_checkpoint(path) == m);
  CHECK(std::filesystem::file_size(path) == 8 + 4 * 4 + 8 + 8 * m.parameter_count());
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "garbage";
  }
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(PolicyModel(PolicyShape{1, 1, 3}), ConfigError);
  CHECK_THROWS_AS(PolicyModel(PolicyShape{3, 0, 3}), ConfigError);
  CHECK_THROWS_AS(PolicyModel(PolicyShape{3, 1, 0}), ConfigError);
}
