// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/error.hpp"
#include "rainbowpo/losses.hpp"
#include "support/oracles.hpp"

using namespace rainbow;

namespace {

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

RainbowConfig plain(double alpha, int eta, double gamma) {
  RainbowConfig c;
  c.alpha = alpha;
  c.eta = eta;
  c.gamma = gamma;
  c.use_dispersion = false;
  return c;
}

// Per-pair log-likelihoods for hand-coded objectives.
struct LL {
  double tw, tl, rw, rl;
  double nw, nl;
};

LL lls(const oracle::Fixture& f, const PreferencePair& p) {
  return {oracle::log_prob(f.theta, p.ctx, p.yw), oracle::log_prob(f.theta, p.ctx, p.yl),
          oracle::log_prob(f.ref, p.ctx, p.yw),   oracle::log_prob(f.ref, p.ctx, p.yl),
          static_cast<double>(p.yw.size()),       static_cast<double>(p.yl.size())};
}

template <typename F>
double mean_loss(const oracle::Fixture& f, F per_pair) {
  double s = 0.0;
  for (const auto& p : f.batch) s += per_pair(lls(f, p));
  return s / static_cast<double>(f.batch.size());
}

}  // namespace

TEST_CASE("link functions") {
  const auto lg = LinkFunction::logistic();
  CHECK(lg.value(0.0) == doctest::Approx(std::numbers::ln2));
  CHECK(lg.value(-800.0) == doctest::Approx(800.0));
  CHECK(lg.value(800.0) == 0.0);
  CHECK(lg.derivative(0.0) == doctest::Approx(-0.5));
  const auto h = LinkFunction::hinge(1.0);
  CHECK(h.value(0.25) == doctest::Approx(0.75));
  CHECK(h.value(2.0) == 0.0);
  CHECK(h.derivative(0.5) == -1.0);
  CHECK(h.derivative(1.0) == 0.0);  // subgradient at the kink
  const auto sq = LinkFunction::square();
  CHECK(sq.value(1.5) == doctest::Approx(1.0));
  CHECK(sq.derivative(1.5) == doctest::Approx(2.0));
  CHECK(link_kind_from_string("hinge") == LinkKind::Hinge);
  CHECK_THROWS_AS(link_kind_from_string("cubic"), ConfigError);
}

TEST_CASE("config validation") {
  RainbowConfig c;
  CHECK_NOTHROW(c.validate());
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.eta = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.gamma = std::nan("");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.link = LinkFunction::hinge(-1.0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("implicit reward") {
  const auto f = oracle::fixture(1, 5);
  for (const auto& p : f.batch) {
    CHECK(implicit_reward(f.ref, f.ref, p.ctx, p.yw) == 0.0);
    const double want = oracle::log_prob(f.theta, p.ctx, p.yw) - oracle::log_prob(f.ref, p.ctx, p.yw);
    CHECK(std::abs(implicit_reward(f.theta, f.ref, p.ctx, p.yw) - want) < 1e-12);
  }
  const PolicyModel other(PolicyShape{5, 2, 7});
  CHECK_THROWS_AS(implicit_reward(f.theta, other, 0, TokenSeq{{4}}), ConfigError);
}

TEST_CASE("normalized log-likelihood") {
  const PolicyModel u(PolicyShape{4, 1, 5});
  const TokenSeq y{{0, 1, 3}};
  CHECK(normalized_loglik(u, 0, y, 1) == doctest::Approx(-4.158883083359672 / 3).epsilon(1e-12));
  CHECK(normalized_loglik(u, 0, y, 0) == log_prob(u, 0, y));
  const TokenSeq one{{3}};
  CHECK(normalized_loglik(u, 0, one, 1) == normalized_loglik(u, 0, one, 0));
  const auto f = oracle::fixture(2, 4);
  for (const auto& p : f.batch) {
    CHECK(std::abs(std::log(normalized_likelihood(f.theta, p.ctx, p.yw)) -
                   normalized_loglik(f.theta, p.ctx, p.yw, 1)) < 1e-12);
  }
  CHECK(normalized_likelihood(u, 0, y) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("inner argument examples") {
  const auto f = oracle::fixture(3, 4);
  RainbowConfig c = plain(1.0, 1, 0.0);
  for (const auto& p : f.batch) CHECK(inner_argument(f.ref, f.ref, p, c, 1.0) == 0.0);

  c = plain(0.0, 1, 0.3);
  c.beta = 2.5;
  for (const auto& p : f.batch) {
    const LL l = lls(f, p);
    const double simpo = c.beta / l.nw * l.tw - c.beta / l.nl * l.tl - c.gamma;
    CHECK(std::abs(inner_argument(f.theta, f.ref, p, c, 1.0) - simpo) < 1e-12);
  }

  // Offsets: explicit offset wins over scores; missing both is an input error.
  c = plain(1.0, 0, 0.0);
  c.use_pair_offset = true;
  c.offset_scale = 2.0;
  PreferencePair p = f.batch[0];
  const double base = inner_argument(f.theta, f.ref, p, plain(1.0, 0, 0.0), 1.0);
  CHECK(inner_argument(f.theta, f.ref, p, c, 1.0) ==
        doctest::Approx(base - 2.0 * (*p.score_w - *p.score_l)));
  p.offset = 0.25;
  CHECK(inner_argument(f.theta, f.ref, p, c, 1.0) == doctest::Approx(base - 0.5));
  p.offset.reset();
  p.score_w.reset();
  p.score_l.reset();
  CHECK_THROWS_AS(inner_argument(f.theta, f.ref, p, c, 1.0), InputError);

  // Explicit length penalty and phi scaling.
  c = plain(1.0, 0, 0.0);
  c.length_penalty = 0.1;
  const auto& q = f.batch[1];
  const double diff = static_cast<double>(q.yw.size()) - static_cast<double>(q.yl.size());
  CHECK(inner_argument(f.theta, f.ref, q, c, 3.0) ==
        doctest::Approx(3.0 * (inner_argument(f.theta, f.ref, q, plain(1.0, 0, 0.0), 1.0) - 0.1 * diff)));
  CHECK_THROWS_AS(inner_argument(f.theta, f.ref, q, c, -1.0), PreconditionError);
}

TEST_CASE("mixing is affine in alpha") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto f = oracle::fixture(5000 + s, 1);
    RainbowConfig c = plain(0.0, static_cast<int>(s % 2), 0.05 * static_cast<double>(s % 7));
    c.beta = 0.5 + static_cast<double>(s % 10);
    auto x = [&](double a) {
      c.alpha = a;
      return inner_argument(f.theta, f.ref, f.batch[0], c, 1.0);
    };
    worst = std::max(worst, std::abs(x(0.5) - 0.5 * (x(0.0) + x(1.0))));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("identity policy gives ln 2") {
  const auto f = oracle::fixture(4, 6);
  for (int eta : {0, 1}) {
    const auto r = rainbow_loss(f.ref, f.ref, f.batch, plain(1.0, eta, 0.0), ones(6));
    CHECK(r.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  }
}

TEST_CASE("specializations equal hand-coded objectives") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto f = oracle::fixture(700 + s, 1 + static_cast<int>(s % 7));
    const auto phi = ones(f.batch.size());
    const double beta = 0.1 + 0.05 * static_cast<double>(s);

    auto run = [&](RainbowConfig c) {
      c.beta = beta;
      return rainbow_loss(f.theta, f.ref, f.batch, c, phi).loss;
    };
    // DPO
    CHECK(std::abs(run(plain(1.0, 0, 0.0)) - mean_loss(f, [&](const LL& l) {
            return oracle::nls(beta * (l.tw - l.rw) - beta * (l.tl - l.rl));
          })) <= 1e-12);
    // LN-DPO; gamma is inert at alpha = 1.
    CHECK(std::abs(run(plain(1.0, 1, 0.4)) - mean_loss(f, [&](const LL& l) {
            return oracle::nls(beta / l.nw * (l.tw - l.rw) - beta / l.nl * (l.tl - l.rl));
          })) <= 1e-12);
    // SimPO
    CHECK(std::abs(run(plain(0.0, 1, 0.4)) - mean_loss(f, [&](const LL& l) {
            return oracle::nls(beta / l.nw * l.tw - beta / l.nl * l.tl - 0.4);
          })) <= 1e-12);
    // IPO
    RainbowConfig ipo = plain(1.0, 0, 0.0);
    ipo.link = LinkFunction::square();
    CHECK(std::abs(run(ipo) - mean_loss(f, [&](const LL& l) {
            const double h = beta * (l.tw - l.rw) - beta * (l.tl - l.rl);
            return (h - 0.5) * (h - 0.5);
          })) <= 1e-12);
    // CPO with both SFT normalizations.
    RainbowConfig cpo = plain(0.0, 0, 0.0);
    cpo.sft_weight = 0.7;
    CHECK(std::abs(run(cpo) - mean_loss(f, [&](const LL& l) {
            return oracle::nls(beta * l.tw - beta * l.tl) - 0.7 * l.tw;
          })) <= 1e-12);
    cpo.sft_normalized = true;
    CHECK(std::abs(run(cpo) - mean_loss(f, [&](const LL& l) {
            return oracle::nls(beta * l.tw - beta * l.tl) - 0.7 * l.tw / l.nw;
          })) <= 1e-12);
    // SLiC-style hinge, with and without the reference.
    RainbowConfig slic = plain(1.0, 0, 0.0);
    slic.link = LinkFunction::hinge(0.8);
    CHECK(std::abs(run(slic) - mean_loss(f, [&](const LL& l) {
            return std::max(0.0, 0.8 - (beta * (l.tw - l.rw) - beta * (l.tl - l.rl)));
          })) <= 1e-12);
    slic.alpha = 0.0;
    CHECK(std::abs(run(slic) - mean_loss(f, [&](const LL& l) {
            return std::max(0.0, 0.8 - beta * (l.tw - l.tl));
          })) <= 1e-12);
  }
}

TEST_CASE("DPO+ margin through a unit pair offset") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto f = oracle::fixture(900 + s, 4);
    for (auto& p : f.batch) p.offset = 1.0;
    RainbowConfig c = plain(1.0, 0, 0.0);
    c.beta = 0.3;
    c.use_pair_offset = true;
    c.offset_scale = 0.5;
    const double got = rainbow_loss(f.theta, f.ref, f.batch, c, ones(4)).loss;
    const double want = mean_loss(f, [&](const LL& l) {
      return oracle::nls(0.3 * (l.tw - l.rw) - 0.3 * (l.tl - l.rl) - 0.5);
    });
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("gradients match finite differences across configurations") {
  const LinkFunction links[] = {LinkFunction::logistic(), LinkFunction::hinge(1.0), LinkFunction::square()};
  std::uint64_t seed = 0;
  int configs = 0;
  double worst = 0.0;
  for (const auto& link : links) {
    for (int eta : {0, 1}) {
      for (double alpha : {0.0, 0.25, 1.0}) {
        for (double gamma : {0.0, 0.1}) {
          for (double lambda : {0.0, 0.1}) {
            for (bool disp : {false, true}) {
              RainbowConfig c;
              c.link = link;
              c.eta = eta;
              c.alpha = alpha;
              c.gamma = gamma;
              c.sft_weight = lambda;
              c.use_dispersion = disp;
              c.beta = 1.5;
              for (;;) {
                const auto f = oracle::fixture(20000 + seed++, 3);
                std::vector<double> phi(f.batch.size(), 1.0);
                if (disp) {
                  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = oracle::dispersion(f.ref, f.batch[i], 1e-6, true);
                }
                const auto r = rainbow_loss(f.theta, f.ref, f.batch, c, phi);
                bool near_kink = false;
                for (double x : r.per_pair_inner) near_kink |= link.kind == LinkKind::Hinge && std::abs(x - 1.0) < 1e-3;
                if (near_kink) continue;
                const auto fd = oracle::fd_gradient(f.theta, [&](const PolicyModel& m) {
                  return rainbow_loss(m, f.ref, f.batch, c, phi).loss;
                });
                worst = std::max(worst, oracle::max_rel_error(r.gradient.values, fd));
                break;
              }
              ++configs;
            }
          }
        }
      }
    }
  }
  CHECK(configs >= 100);
  CHECK(worst <= 1e-6);
}

TEST_CASE("loss errors") {
  const auto f = oracle::fixture(6, 2);
  const RainbowConfig c;
  CHECK_THROWS_AS(rainbow_loss(f.theta, f.ref, {}, c, {}), InputError);
  CHECK_THROWS_AS(rainbow_loss(f.theta, f.ref, f.batch, c, ones(1)), InputError);
  PolicyModel bad = f.theta;
  bad.logits()[0] = std::nan("");
  std::vector<PreferencePair> batch(f.batch.begin(), f.batch.end());
  for (auto& p : batch) p.ctx = 0;
  CHECK_THROWS_AS(rainbow_loss(bad, f.ref, batch, plain(1.0, 0, 0.0), ones(2)), NumericalError);
  try {
    rainbow_loss(bad, f.ref, batch, plain(1.0, 0, 0.0), ones(2));
  } catch (const NumericalError& e) {
    CHECK(e.where() == 0);
  }
}

TEST_CASE("swap symmetry, margin monotonicity and one descent step") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto f = oracle::fixture(3000 + s, 3);
    RainbowConfig c = plain(static_cast<double>(s % 3) * 0.5, static_cast<int>(s % 2), 0.0);
    for (const auto& p : f.batch) {
      PreferencePair q = p;
      std::swap(q.yw, q.yl);
      CHECK(inner_argument(f.theta, f.ref, q, c, 1.0) == -inner_argument(f.theta, f.ref, p, c, 1.0));
    }
    RainbowConfig lo = plain(0.3, 1, 0.1);
    RainbowConfig hi = plain(0.3, 1, 0.9);
    CHECK(rainbow_loss(f.theta, f.ref, f.batch, hi, ones(3)).loss >=
          rainbow_loss(f.theta, f.ref, f.batch, lo, ones(3)).loss);

    if (f.batch[0].yw == f.batch[0].yl) continue;
    const std::span<const PreferencePair> one(f.batch.data(), 1);
    const auto before = rainbow_loss(f.theta, f.ref, one, c, ones(1));
    PolicyModel t = f.theta;
    double norm = 0.0;
    for (double g : before.gradient.values) norm += g * g;
    norm = std::sqrt(norm);
    if (norm < 1e-9) continue;  // saturated link, no usable direction
    for (std::size_t i = 0; i < t.parameter_count(); ++i) {
      t.logits()[i] -= 1e-3 * before.gradient[i] / norm;
    }
    CHECK(rainbow_loss(t, f.ref, one, c, ones(1)).mean_margin > before.mean_margin);
  }
}

TEST_CASE("ORPO scalar examples") {
  CHECK(std::log(3.5) == doctest::Approx(1.252763).epsilon(1e-6));
  const OrpoBound b = orpo_po_bound(0.6, 0.3);
  CHECK(std::abs(b.po_term - oracle::orpo_po(0.6, 0.3)) < 1e-14);
  CHECK(b.po_term == doctest::Approx(0.2513144).epsilon(1e-6));
  CHECK(b.bound == doctest::Approx(0.3159040).epsilon(1e-6));
  CHECK(b.po_term <= b.bound);
  const OrpoBound tight = orpo_po_bound(0.4, 0.4);
  CHECK(tight.po_term == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  CHECK(tight.bound == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  CHECK_THROWS_AS(orpo_po_bound(0.3, 0.6), PreconditionError);
  CHECK_THROWS_AS(orpo_po_bound(1.0, 0.6), PreconditionError);
  CHECK_THROWS_AS(orpo_po_bound(0.5, 0.0), PreconditionError);
}

TEST_CASE("ORPO bound sweep and sharpness") {
  RngStream r(31);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const double pl = 0.001 + 0.998 * r.uniform();
    const double pw = pl + (0.999 - pl) * r.uniform();
    const auto b = orpo_po_bound(pw, pl);
    violations += b.po_term <= b.bound ? 0 : 1;
    CHECK(std::abs(b.bound - oracle::orpo_bound(pw, pl)) < 1e-12);
  }
  CHECK(violations == 0);
  // gap / Delta^2 stays bounded as Delta shrinks.
  double prev_ratio = 0.0;
  for (double d : {1e-1, 1e-2, 1e-3}) {
    const auto b = orpo_po_bound(0.4 * std::exp(d), 0.4);
    const double ratio = (b.bound - b.po_term) / (d * d);
    CHECK(ratio > 0.0);
    CHECK(ratio < 1.0);
    if (prev_ratio > 0.0) CHECK(std::abs(ratio - prev_ratio) / prev_ratio < 0.2);
    prev_ratio = ratio;
  }
}

TEST_CASE("ORPO loss: value, gradient and clamping") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto f = oracle::fixture(400 + s, 3);
    const double lambda = 0.1 * static_cast<double>(s % 5);
    const auto r = orpo_loss(f.theta, f.batch, lambda);
    double want = 0.0;
    for (const auto& p : f.batch) {
      const double pw = std::exp(oracle::log_prob(f.theta, p.ctx, p.yw) / p.yw.size());
      const double pl = std::exp(oracle::log_prob(f.theta, p.ctx, p.yl) / p.yl.size());
      want += -std::log(pw) + lambda * oracle::orpo_po(pw, pl);
    }
    want /= 3.0;
    CHECK(std::abs(r.loss - want) < 1e-12);
    const auto fd = oracle::fd_gradient(f.theta, [&](const PolicyModel& m) { return orpo_loss(m, f.batch, lambda).loss; });
    CHECK(oracle::max_rel_error(r.gradient.values, fd) <= 1e-6);
    CHECK(r.clamp_count == 0);
  }
  // Equal likelihoods give ln 2 per pair in the odds term.
  const auto f = oracle::fixture(5, 1);
  std::vector<PreferencePair> same{f.batch[0]};
  same[0].yl = same[0].yw;
  const double nll = -normalized_loglik(f.theta, same[0].ctx, same[0].yw, 1);
  CHECK(orpo_loss(f.theta, same, 1.0).loss == doctest::Approx(nll + std::numbers::ln2).epsilon(1e-12));

  // A near-deterministic policy hits the clamp.
  PolicyModel det(PolicyShape{3, 1, 4});
  for (int prev = 0; prev <= 3; ++prev) det.row(0, prev)[2] = 100.0;
  std::vector<PreferencePair> b{PreferencePair{0, TokenSeq{{2}}, TokenSeq{{0, 2}}, {}, {}, {}}};
  const auto r = orpo_loss(det, b, 1.0);
  CHECK(r.clamp_count >= 1);
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("describe mentions every knob") {
  const std::string d = describe(RainbowConfig{});
  for (const char* key : {"beta", "alpha", "gamma", "eta", "link"}) CHECK(d.find(key) != std::string::npos);
}
