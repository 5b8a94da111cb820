// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "rainbowpo/dispersion.hpp"
#include "rainbowpo/losses.hpp"
#include "rainbowpo/policy.hpp"
#include "rainbowpo/sampler.hpp"
#include "rainbowpo/synth.hpp"

namespace rainbow {
namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTolerance = 1e-6;
constexpr double kExactTolerance = 1e-12;

// Small random worlds keep finite differences cheap.
struct Fixture {
  PolicyModel theta;
  PolicyModel ref;
  std::vector<PreferencePair> batch;
};

TokenSeq random_sequence(RngStream& rng, int vocab, int max_len) {
  const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len)));
  TokenSeq y;
  for (int i = 0; i + 1 < len; ++i) {
    y.tokens.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab - 1))));
  }
  y.tokens.push_back(vocab - 1);
  return y;
}

Fixture random_fixture(RngStream rng, int pairs) {
  PolicyShape shape;
  shape.vocab = 3 + static_cast<int>(rng.below(4));
  shape.contexts = 1 + static_cast<int>(rng.below(3));
  shape.max_len = 3 + static_cast<int>(rng.below(6));
  RngStream ref_rng = rng.substream(1);
  RngStream theta_rng = rng.substream(2);
  Fixture f{PolicyModel::random(shape, theta_rng, 1.0), PolicyModel::random(shape, ref_rng, 1.0),
            {}};
  RngStream pair_rng = rng.substream(3);
  for (int p = 0; p < pairs; ++p) {
    PreferencePair pair;
    pair.ctx = static_cast<int>(pair_rng.below(static_cast<std::uint64_t>(shape.contexts)));
    pair.yw = random_sequence(pair_rng, shape.vocab, shape.max_len);
    pair.yl = random_sequence(pair_rng, shape.vocab, shape.max_len);
    const double a = pair_rng.normal();
    const double b = pair_rng.normal();
    pair.score_w = std::max(a, b);
    pair.score_l = std::min(a, b);
    f.batch.push_back(std::move(pair));
  }
  return f;
}

double uniform_in(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// Max componentwise gap between an analytic gradient and central
// differences, relative to the largest finite-difference component.
double fd_relative_error(PolicyModel theta, std::span<const double> analytic,
                         const std::function<double(const PolicyModel&)>& loss) {
  auto params = theta.logits();
  double max_gap = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + kFdStep;
    const double up = loss(theta);
    params[i] = saved - kFdStep;
    const double down = loss(theta);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * kFdStep);
    max_gap = std::max(max_gap, std::abs(fd - analytic[i]));
    scale = std::max(scale, std::abs(fd));
  }
  return max_gap / std::max(scale, 1e-8);
}

using CheckFn = std::function<std::string(const CheckOptions&)>;  // "" on success

std::string check_policy_normalization(const CheckOptions& opts) {
  // Exhaustive enumeration of every terminated sequence; the mass must be
  // at most one and match the dynamic-programming stop probability.
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(1);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyShape shape{3 + trial % 2, 1, 4 + trial % 2};
    RngStream trial_rng = rng.substream(static_cast<std::uint64_t>(trial));
    const PolicyModel m = PolicyModel::random(shape, trial_rng, 1.5);
    const int n = shape.vocab;
    const int stop = n - 1;
    double total = 0.0;
    std::vector<TokenId> prefix;
    std::function<void()> walk = [&] {
      TokenSeq y{prefix};
      y.tokens.push_back(stop);
      total += std::exp(log_prob(m, 0, y));
      if (static_cast<int>(prefix.size()) + 1 >= shape.max_len) return;
      for (int t = 0; t < stop; ++t) {
        prefix.push_back(t);
        walk();
        prefix.pop_back();
      }
    };
    walk();

    std::vector<double> mass(static_cast<std::size_t>(n + 1), 0.0);
    mass[static_cast<std::size_t>(n)] = 1.0;
    double stopped = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(n));
    for (int step = 0; step < shape.max_len; ++step) {
      std::vector<double> next(static_cast<std::size_t>(n + 1), 0.0);
      for (int prev = 0; prev <= n; ++prev) {
        if (mass[prev] == 0.0) continue;
        softmax(m.row(0, prev), probs);
        stopped += mass[prev] * probs[stop];
        for (int t = 0; t < stop; ++t) next[t] += mass[prev] * probs[t];
      }
      mass = std::move(next);
    }
    if (total > 1.0 + kExactTolerance || std::abs(total - stopped) > kExactTolerance) {
      return "trial " + std::to_string(trial) + ": enumerated mass " + fmt(total) +
             " vs stop probability " + fmt(stopped);
    }
  }
  return "";
}

std::string check_log_prob_gradient(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(2);
  for (int trial = 0; trial < 50; ++trial) {
    Fixture f = random_fixture(rng.substream(static_cast<std::uint64_t>(trial)), 1);
    const auto& pair = f.batch[0];
    const GradientVector g = grad_log_prob(f.theta, pair.ctx, pair.yw);
    const double err = fd_relative_error(f.theta, g.values, [&](const PolicyModel& m) {
      return log_prob(m, pair.ctx, pair.yw);
    });
    if (err > kFdTolerance) {
      return "trial " + std::to_string(trial) + ": relative error " + fmt(err);
    }
  }
  return "";
}

// The loss under test, optionally with a deliberate mutation.
LossReport loss_under_test(const PolicyModel& theta, const PolicyModel& ref,
                           std::span<const PreferencePair> batch, const RainbowConfig& cfg,
                           std::span<const double> phi, CheckFault fault) {
  LossReport r = rainbow_loss(theta, ref, batch, cfg, phi);
  if (fault == CheckFault::LogisticSignFlip && cfg.link.kind == LinkKind::Logistic) {
    double shift = 0.0;
    for (double x : r.per_pair_inner) shift += softplus(x) - softplus(-x);
    r.loss += shift / static_cast<double>(r.per_pair_inner.size());
  }
  return r;
}

std::string check_loss_gradients(const CheckOptions& opts) {
  const LinkFunction links[] = {LinkFunction::logistic(), LinkFunction::hinge(1.0),
                                LinkFunction::square()};
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(3);
  int configs = 0;
  std::uint64_t draw = 0;
  for (const auto& link : links) {
    for (int eta : {0, 1}) {
      for (double alpha : {0.0, 0.25, 1.0}) {
        for (double gamma : {0.0, 0.1}) {
          for (double lambda : {0.0, 0.1}) {
            for (bool disp : {false, true}) {
              RainbowConfig cfg;
              cfg.link = link;
              cfg.eta = eta;
              cfg.alpha = alpha;
              cfg.gamma = gamma;
              cfg.sft_weight = lambda;
              cfg.use_dispersion = disp;
              cfg.sft_normalized = configs % 3 == 0;
              cfg.use_pair_offset = configs % 2 == 1;
              cfg.offset_scale = cfg.use_pair_offset ? 0.5 : 0.0;
              cfg.length_penalty = configs % 4 == 1 ? 0.05 : 0.0;
              // Redraw fixtures whose hinge argument sits near the kink,
              // where the loss is not differentiable.
              for (;;) {
                RngStream frng = rng.substream(draw++);
                Fixture f = random_fixture(frng, 4);
                RngStream brng = frng.substream(9);
                cfg.beta = uniform_in(brng, 0.2, 3.0);
                const auto phi = dispersion_weights(f.ref, f.batch, {}, disp);
                const LossReport r = rainbow_loss(f.theta, f.ref, f.batch, cfg, phi);
                if (link.kind == LinkKind::Hinge) {
                  const bool near_kink =
                      std::any_of(r.per_pair_inner.begin(), r.per_pair_inner.end(),
                                  [&](double x) { return std::abs(x - link.delta) < 1e-3; });
                  if (near_kink) continue;
                }
                const double err =
                    fd_relative_error(f.theta, r.gradient.values, [&](const PolicyModel& m) {
                      return rainbow_loss(m, f.ref, f.batch, cfg, phi).loss;
                    });
                if (!(err <= kFdTolerance)) {
                  return describe(cfg) + ": relative error " + fmt(err);
                }
                break;
              }
              ++configs;
            }
          }
        }
      }
    }
  }
  // ORPO has its own gradient path.
  for (int trial = 0; trial < 20; ++trial) {
    Fixture f = random_fixture(rng.substream(draw++), 4);
    const double lambda = 0.05 * trial;
    const LossReport r = orpo_loss(f.theta, f.batch, lambda);
    const double err = fd_relative_error(f.theta, r.gradient.values, [&](const PolicyModel& m) {
      return orpo_loss(m, f.batch, lambda).loss;
    });
    if (!(err <= kFdTolerance)) return "orpo lambda=" + fmt(lambda) + ": relative error " + fmt(err);
    ++configs;
  }
  if (configs < 100) return "only " + std::to_string(configs) + " configurations";
  return "";
}

// Directly coded objectives, written from log-likelihoods only.
struct Objective {
  const char* name;
  RainbowConfig cfg;
  std::function<double(const Fixture&, const RainbowConfig&)> oracle;
  bool unit_offsets = false;  // give every pair offset 1
};

double mean_over(const Fixture& f, const std::function<double(const PreferencePair&)>& term) {
  double total = 0.0;
  for (const auto& p : f.batch) total += term(p);
  return total / static_cast<double>(f.batch.size());
}

double neg_log_sigmoid(double z) { return std::log1p(std::exp(-std::abs(z))) + std::max(-z, 0.0); }

std::vector<Objective> objectives() {
  auto lp = [](const PolicyModel& m, const PreferencePair& p, const TokenSeq& y) {
    return log_prob(m, p.ctx, y);
  };
  auto base = [](double alpha, int eta, double gamma) {
    RainbowConfig c;
    c.alpha = alpha;
    c.eta = eta;
    c.gamma = gamma;
    c.use_dispersion = false;
    c.sft_weight = 0.0;
    return c;
  };
  std::vector<Objective> out;
  out.push_back({"DPO", base(1.0, 0, 0.0), [=](const Fixture& f, const RainbowConfig& c) {
                   return mean_over(f, [&](const PreferencePair& p) {
                     const double rw = lp(f.theta, p, p.yw) - lp(f.ref, p, p.yw);
                     const double rl = lp(f.theta, p, p.yl) - lp(f.ref, p, p.yl);
                     return neg_log_sigmoid(c.beta * rw - c.beta * rl);
                   });
                 }});
  out.push_back({"LN-DPO", base(1.0, 1, 0.7), [=](const Fixture& f, const RainbowConfig& c) {
                   return mean_over(f, [&](const PreferencePair& p) {
                     const double rw = lp(f.theta, p, p.yw) - lp(f.ref, p, p.yw);
                     const double rl = lp(f.theta, p, p.yl) - lp(f.ref, p, p.yl);
                     return neg_log_sigmoid(c.beta / static_cast<double>(p.yw.size()) * rw -
                                            c.beta / static_cast<double>(p.yl.size()) * rl);
                   });
                 }});
  out.push_back({"SimPO", base(0.0, 1, 0.5), [=](const Fixture& f, const RainbowConfig& c) {
                   return mean_over(f, [&](const PreferencePair& p) {
                     return neg_log_sigmoid(
                         c.beta / static_cast<double>(p.yw.size()) * lp(f.theta, p, p.yw) -
                         c.beta / static_cast<double>(p.yl.size()) * lp(f.theta, p, p.yl) -
                         c.gamma);
                   });
                 }});
  {
    RainbowConfig c = base(1.0, 0, 0.0);
    c.link = LinkFunction::square();
    out.push_back({"IPO", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double h = c2.beta * (lp(f.theta, p, p.yw) - lp(f.ref, p, p.yw)) -
                                        c2.beta * (lp(f.theta, p, p.yl) - lp(f.ref, p, p.yl));
                       return (h - 0.5) * (h - 0.5);
                     });
                   }});
  }
  {
    // With the full reference (alpha = 1) the (1 - alpha) gamma margin
    // vanishes, so the DPO+ margin rides on a unit per-pair offset scaled by c.
    RainbowConfig c = base(1.0, 0, 0.0);
    c.use_pair_offset = true;
    c.offset_scale = 0.6;
    out.push_back({"DPO+", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double rw = lp(f.theta, p, p.yw) - lp(f.ref, p, p.yw);
                       const double rl = lp(f.theta, p, p.yl) - lp(f.ref, p, p.yl);
                       return neg_log_sigmoid(c2.beta * rw - c2.beta * rl - c2.offset_scale);
                     });
                   },
                   true});
  }
  {
    RainbowConfig c = base(0.0, 0, 0.0);
    c.sft_weight = 0.8;
    out.push_back({"CPO", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double lw = lp(f.theta, p, p.yw);
                       const double ll = lp(f.theta, p, p.yl);
                       return neg_log_sigmoid(c2.beta * lw - c2.beta * ll) - c2.sft_weight * lw;
                     });
                   }});
    c.sft_normalized = true;
    out.push_back({"CPO (per-token SFT)", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double lw = lp(f.theta, p, p.yw);
                       const double ll = lp(f.theta, p, p.yl);
                       return neg_log_sigmoid(c2.beta * lw - c2.beta * ll) -
                              c2.sft_weight * lw / static_cast<double>(p.yw.size());
                     });
                   }});
  }
  {
    RainbowConfig c = base(1.0, 0, 0.0);
    c.link = LinkFunction::hinge(1.0);
    out.push_back({"SLiC (reference hinge)", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double h = c2.beta * (lp(f.theta, p, p.yw) - lp(f.ref, p, p.yw)) -
                                        c2.beta * (lp(f.theta, p, p.yl) - lp(f.ref, p, p.yl));
                       return std::max(0.0, c2.link.delta - h);
                     });
                   }});
    c.alpha = 0.0;
    out.push_back({"SLiC (reference-free hinge)", c, [=](const Fixture& f, const RainbowConfig& c2) {
                     return mean_over(f, [&](const PreferencePair& p) {
                       const double h =
                           c2.beta * (lp(f.theta, p, p.yw) - lp(f.theta, p, p.yl));
                       return std::max(0.0, c2.link.delta - h);
                     });
                   }});
  }
  return out;
}

// DPO+ with a real margin: alpha < 1 mixes in part of the reference, and the
// margin (1 - alpha) gamma is subtracted inside the link.
double dpo_plus_margin_oracle(const Fixture& f, const RainbowConfig& c) {
  return mean_over(f, [&](const PreferencePair& p) {
    const double lw = log_prob(f.theta, p.ctx, p.yw);
    const double ll = log_prob(f.theta, p.ctx, p.yl);
    const double rw = log_prob(f.ref, p.ctx, p.yw);
    const double rl = log_prob(f.ref, p.ctx, p.yl);
    return neg_log_sigmoid(c.beta * (lw - ll) - c.alpha * c.beta * (rw - rl) -
                           (1.0 - c.alpha) * c.gamma);
  });
}

std::string check_specializations(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(4);
  auto objs = objectives();
  {
    RainbowConfig c;
    c.alpha = 0.5;
    c.eta = 0;
    c.gamma = 0.6;
    c.use_dispersion = false;
    objs.push_back({"DPO+ (margin)", c, dpo_plus_margin_oracle});
  }
  std::string failures;
  for (std::size_t o = 0; o < objs.size(); ++o) {
    const Objective& obj = objs[o];
    double worst = 0.0;
    for (int b = 0; b < 50; ++b) {
      RngStream brng = rng.substream(o).substream(static_cast<std::uint64_t>(b));
      Fixture f = random_fixture(brng, 1 + static_cast<int>(brng.below(8)));
      if (obj.unit_offsets) {
        for (auto& p : f.batch) p.offset = 1.0;
      }
      RainbowConfig cfg = obj.cfg;
      RngStream prng = brng.substream(11);
      cfg.beta = uniform_in(prng, 0.1, 2.0);
      const std::vector<double> phi(f.batch.size(), 1.0);
      const double got = loss_under_test(f.theta, f.ref, f.batch, cfg, phi, opts.fault).loss;
      const double want = obj.oracle(f, cfg);
      worst = std::max(worst, std::abs(got - want));
    }
    if (!(worst <= kExactTolerance)) {
      failures += std::string(failures.empty() ? "" : "; ") + obj.name +
                  "-equivalence broken (max gap " + fmt(worst) + ")";
    }
  }
  return failures;
}

std::string check_mixing_affinity(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    RngStream irng = rng.substream(static_cast<std::uint64_t>(i));
    Fixture f = random_fixture(irng, 1);
    RngStream crng = irng.substream(7);
    RainbowConfig cfg;
    cfg.beta = uniform_in(crng, 0.1, 10.0);
    cfg.gamma = uniform_in(crng, 0.0, 1.0);
    cfg.eta = static_cast<int>(crng.below(2));
    cfg.use_pair_offset = crng.below(2) == 1;
    cfg.offset_scale = uniform_in(crng, 0.0, 1.0);
    cfg.length_penalty = uniform_in(crng, 0.0, 0.1);
    const double phi = uniform_in(crng, 0.0, 3.0);
    auto at = [&](double alpha) {
      RainbowConfig c = cfg;
      c.alpha = alpha;
      return inner_argument(f.theta, f.ref, f.batch[0], c, phi);
    };
    const double x0 = at(0.0);
    const double xh = at(0.5);
    const double x1 = at(1.0);
    worst = std::max(worst, std::abs(xh - 0.5 * (x0 + x1)));
  }
  return worst <= kExactTolerance ? "" : "collinearity residual " + fmt(worst);
}

std::string check_loss_properties(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(6);
  for (int i = 0; i < 200; ++i) {
    RngStream irng = rng.substream(static_cast<std::uint64_t>(i));
    Fixture f = random_fixture(irng, 3);
    RainbowConfig cfg;
    RngStream crng = irng.substream(7);
    cfg.beta = uniform_in(crng, 0.1, 5.0);
    cfg.alpha = static_cast<double>(crng.below(3)) * 0.5;
    cfg.eta = static_cast<int>(crng.below(2));
    cfg.gamma = 0.0;
    cfg.use_dispersion = false;

    // Swapping winner and loser negates the link argument.
    for (const auto& p : f.batch) {
      PreferencePair s = p;
      std::swap(s.yw, s.yl);
      const double x = inner_argument(f.theta, f.ref, p, cfg, 1.0);
      const double xs = inner_argument(f.theta, f.ref, s, cfg, 1.0);
      if (x != -xs) return "swap symmetry: " + fmt(x) + " vs " + fmt(xs);
    }

    // A larger margin never lowers the logistic loss.
    const std::vector<double> phi(f.batch.size(), 1.0);
    RainbowConfig lo = cfg;
    RainbowConfig hi = cfg;
    lo.alpha = hi.alpha = 0.25;
    lo.gamma = uniform_in(crng, 0.0, 1.0);
    hi.gamma = lo.gamma + uniform_in(crng, 0.0, 1.0);
    if (rainbow_loss(f.theta, f.ref, f.batch, hi, phi).loss <
        rainbow_loss(f.theta, f.ref, f.batch, lo, phi).loss) {
      return "gamma monotonicity at " + describe(hi);
    }

    // One small descent step on a single pair widens the margin.
    std::span<const PreferencePair> one(f.batch.data(), 1);
    if (f.batch[0].yw == f.batch[0].yl) continue;
    const std::vector<double> phi1(1, 1.0);
    const LossReport before = rainbow_loss(f.theta, f.ref, one, cfg, phi1);
    PolicyModel stepped = f.theta;
    auto w = stepped.logits();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 1e-4 * before.gradient[k];
    const LossReport after = rainbow_loss(stepped, f.ref, one, cfg, phi1);
    if (!(after.mean_margin > before.mean_margin)) {
      return "descent step did not widen the margin at " + describe(cfg);
    }
  }
  return "";
}

std::string check_orpo_bound(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(8);
  for (int i = 0; i < 10000; ++i) {
    const double p_l = 1e-3 + (1.0 - 2e-3) * rng.uniform();
    const double p_w = p_l + (1.0 - 1e-3 - p_l) * rng.uniform();
    const OrpoBound b = orpo_po_bound(p_w, p_l);
    if (!(b.po_term <= b.bound)) {
      return "violation at p_w=" + fmt(p_w) + " p_l=" + fmt(p_l);
    }
  }
  // Sharpness: the gap shrinks like Delta^2.
  const double p_l = 0.4;
  std::vector<double> xs;
  std::vector<double> ys;
  for (int k = 0; k <= 8; ++k) {
    const double delta = std::pow(10.0, -1.0 - 0.25 * k);
    const OrpoBound b = orpo_po_bound(p_l * std::exp(delta), p_l);
    xs.push_back(std::log(delta));
    ys.push_back(std::log(b.bound - b.po_term));
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  if (slope < 1.8 || slope > 2.2) return "gap exponent " + fmt(slope);
  return "";
}

std::string check_rs_plus(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(9);
  constexpr int kPool = 8;
  constexpr int kTrials = 10000;
  std::vector<double> pct(kPool);
  for (int i = 0; i < kPool; ++i) pct[i] = static_cast<double>(i + 1) / kPool;
  const double taus[] = {0.05, 0.2, 1.0};
  for (std::size_t t = 0; t < 3; ++t) {
    SamplerConfig cfg;
    cfg.pool = kPool;
    cfg.accept = kPool;
    cfg.temperature = taus[t];
    std::vector<int> visits(kPool, 0);
    std::vector<int> accepts(kPool, 0);
    for (int trial = 0; trial < kTrials; ++trial) {
      RngStream trng = rng.substream(t).substream(static_cast<std::uint64_t>(trial));
      const RsSelection sel = rs_select(pct, cfg, trng);
      for (int i = 0; i < kPool; ++i) {
        if (sel.first_visit[i] == RsSelection::Visit::NotVisited) continue;
        ++visits[i];
        accepts[i] += sel.first_visit[i] == RsSelection::Visit::Accepted ? 1 : 0;
      }
    }
    for (int i = 0; i < kPool; ++i) {
      const double p = acceptance_probability(pct[i], taus[t]);
      const double freq = static_cast<double>(accepts[i]) / visits[i];
      if (pct[i] == 1.0) {
        if (accepts[i] != visits[i]) return "P=1 candidate rejected at tau=" + fmt(taus[t]);
        continue;
      }
      const double sigma = std::sqrt(p * (1.0 - p) / visits[i]);
      if (std::abs(freq - p) > 3.0 * sigma) {
        return "tau=" + fmt(taus[t]) + " P=" + fmt(pct[i]) + ": frequency " + fmt(freq) +
               " vs " + fmt(p);
      }
    }
  }

  // With an effectively infinite temperature every candidate is accepted,
  // so RS+ with M = N reduces to best/worst-of-N.
  PolicyShape shape{6, 2, 8};
  RngStream wrng = rng.substream(100);
  const PolicyModel policy = PolicyModel::random(shape, wrng, 1.0);
  const SyntheticReward reward = SyntheticReward::random(2, 6, 0.05, opts.seed);
  const RewardFn fn = reward.as_fn();
  SamplerConfig cfg;
  cfg.pool = cfg.accept = cfg.k = 6;
  cfg.temperature = 1e9;
  for (int s = 0; s < 1000; ++s) {
    const RngStream srng = rng.substream(200).substream(static_cast<std::uint64_t>(s));
    const int ctx = s % 2;
    const SampledPair a = rs_plus(policy, fn, ctx, cfg, srng);
    const SampledPair b = best_worst_of_k(policy, fn, ctx, cfg, srng);
    if (!(a.pair == b.pair)) return "tau=1e9 pair differs from best/worst-of-N at seed " + std::to_string(s);
  }
  return "";
}

std::string check_dispersion(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(10);
  const DispersionConfig cfg;
  for (int i = 0; i < 200; ++i) {
    Fixture f = random_fixture(rng.substream(static_cast<std::uint64_t>(i)), 2);
    for (const auto& p : f.batch) {
      const double phi = dispersion(f.ref, p, cfg);
      if (!(phi >= 0.0 && phi <= -std::log(cfg.floor) + 1e-12)) {
        return "phi out of range: " + fmt(phi);
      }
      PreferencePair single = p;
      single.yw.tokens.assign(1, f.ref.stop_token());
      single.yl.tokens.assign(1, f.ref.stop_token());
      if (dispersion(f.ref, single, cfg) != 0.0) return "unit-length pair has nonzero phi";
    }
    // Uniform rows carry maximal entropy, so phi vanishes.
    const PolicyModel uniform(f.ref.shape());
    for (const auto& p : f.batch) {
      if (std::abs(dispersion(uniform, p, cfg)) > 1e-12) return "uniform reference has phi != 0";
    }
  }
  return "";
}

std::string check_parallel_agreement(const CheckOptions& opts) {
  RngStream rng = RngStream(opts.seed, kCheckStream).substream(11);
  for (int i = 0; i < 20; ++i) {
    Fixture f = random_fixture(rng.substream(static_cast<std::uint64_t>(i)), 64);
    RainbowConfig cfg;
    cfg.sft_weight = 0.1;
    const auto phi = dispersion_weights(f.ref, f.batch, {}, true);
    const LossReport a = rainbow_loss(f.theta, f.ref, f.batch, cfg, phi);
    const LossReport b = reference::rainbow_loss_serial(f.theta, f.ref, f.batch, cfg, phi);
    if (a.loss != b.loss || a.gradient.values != b.gradient.values ||
        a.per_pair_inner != b.per_pair_inner || a.mean_margin != b.mean_margin) {
      return "rainbow_loss differs from serial reference on fixture " + std::to_string(i);
    }
  }
  PolicyShape shape{8, 3, 10};
  RngStream wrng = rng.substream(100);
  const PolicyModel ref = PolicyModel::random(shape, wrng, 1.0);
  RngStream trng = rng.substream(101);
  const PolicyModel theta = PolicyModel::random(shape, trng, 1.0);
  const SyntheticReward reward = SyntheticReward::random(3, 8, 0.05, opts.seed);
  SamplerConfig scfg;
  scfg.pool = 12;
  scfg.accept = 4;
  for (PairMethod m : {PairMethod::BestWorstOfK, PairMethod::RSPlus}) {
    const RngStream drng = rng.substream(102);
    if (!(generate_dataset(ref, reward, 60, m, scfg, drng) ==
          reference::generate_dataset_serial(ref, reward, 60, m, scfg, drng))) {
      return std::string("generate_dataset differs from serial reference for ") + to_string(m);
    }
  }
  const RngStream erng = rng.substream(103);
  const auto data = generate_dataset(ref, reward, 30, PairMethod::BestWorstOfK, scfg, erng);
  if (!(evaluate(theta, ref, reward, data.pairs, 300, erng) ==
        reference::evaluate_serial(theta, ref, reward, data.pairs, 300, erng))) {
    return "evaluate differs from serial reference";
  }
  return "";
}

}  // namespace

std::vector<CheckResult> run_checks(const CheckOptions& opts) {
  const std::pair<const char*, CheckFn> suite[] = {
      {"policy normalization", check_policy_normalization},
      {"policy gradient", check_log_prob_gradient},
      {"loss gradients", check_loss_gradients},
      {"specialization equalities", check_specializations},
      {"mixing affinity", check_mixing_affinity},
      {"loss properties", check_loss_properties},
      {"ORPO bound", check_orpo_bound},
      {"RS+ statistics", check_rs_plus},
      {"dispersion", check_dispersion},
      {"parallel agreement", check_parallel_agreement},
  };
  std::vector<CheckResult> results;
  for (const auto& [name, fn] : suite) {
    CheckResult r;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    try {
      r.detail = fn(opts);
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace rainbow
