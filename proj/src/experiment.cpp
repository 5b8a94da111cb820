// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "rainbowpo/error.hpp"

namespace rainbow {

using nlohmann::ordered_json;

ExperimentConfig::ExperimentConfig() {
  train.lr = 1e-2;
  train.warmup = 0.1;
  train.seed = world.seed;
}

void ExperimentConfig::validate() const {
  world.shape().validate();
  if (!std::isfinite(world.length_bias)) throw ConfigError("world.length_bias must be finite");
  if (!(world.ref_scale >= 0.0) || !(world.init_scale >= 0.0)) {
    throw ConfigError("world scales must be >= 0");
  }
  if (data.prompts < 1) throw ConfigError("data.prompts must be >= 1");
  sampler.validate();
  loss.validate();
  dispersion.validate();
  train.validate();
  if (eval.n_eval < 1) throw ConfigError("eval.n_eval must be >= 1");
  if (!(eval.holdout_fraction >= 0.0 && eval.holdout_fraction < 1.0)) {
    throw ConfigError("eval.holdout_fraction must lie in [0, 1)");
  }
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["world"] = {{"vocab", c.world.vocab},           {"contexts", c.world.contexts},
                {"max_len", c.world.max_len},       {"length_bias", c.world.length_bias},
                {"seed", c.world.seed},             {"ref_scale", c.world.ref_scale},
                {"init_scale", c.world.init_scale}};
  j["data"] = {{"prompts", c.data.prompts}, {"method", to_string(c.data.method)}};
  j["sampler"] = {{"k", c.sampler.k},
                  {"pool", c.sampler.pool},
                  {"accept", c.sampler.accept},
                  {"temperature", c.sampler.temperature},
                  {"max_attempts", c.sampler.max_attempts}};
  j["loss"] = {{"beta", c.loss.beta},
               {"alpha", c.loss.alpha},
               {"gamma", c.loss.gamma},
               {"eta", c.loss.eta},
               {"sft_weight", c.loss.sft_weight},
               {"sft_normalized", c.loss.sft_normalized},
               {"link", to_string(c.loss.link.kind)},
               {"hinge_delta", c.loss.link.delta},
               {"use_dispersion", c.loss.use_dispersion},
               {"use_pair_offset", c.loss.use_pair_offset},
               {"offset_scale", c.loss.offset_scale},
               {"length_penalty", c.loss.length_penalty}};
  j["dispersion"] = {{"floor", c.dispersion.floor},
                     {"per_token_average", c.dispersion.per_token_average}};
  j["train"] = {{"lr", c.train.lr},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"warmup", c.train.warmup},
                {"optimizer", to_string(c.train.optimizer)},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"max_grad_norm", c.train.max_grad_norm},
                {"checkpoint_every", c.train.checkpoint_every},
                {"seed", c.train.seed}};
  j["eval"] = {{"n_eval", c.eval.n_eval}, {"holdout_fraction", c.eval.holdout_fraction}};
  return j;
}

namespace {

// Reads section[key] into out when present.
template <typename T>
void read(const ordered_json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

void reject_unknown(const ordered_json& given, const ordered_json& known, const std::string& where) {
  if (!given.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    if (known.at(key).is_object()) reject_unknown(value, known.at(key), where + key + ".");
  }
}

}  // namespace

ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, to_json(c), "");
    const ordered_json empty = ordered_json::object();
    auto section = [&](const char* name) -> const ordered_json& {
      return j.contains(name) ? j.at(name) : empty;
    };
    const auto& w = section("world");
    read(w, "vocab", c.world.vocab);
    read(w, "contexts", c.world.contexts);
    read(w, "max_len", c.world.max_len);
    read(w, "length_bias", c.world.length_bias);
    read(w, "seed", c.world.seed);
    read(w, "ref_scale", c.world.ref_scale);
    read(w, "init_scale", c.world.init_scale);
    // The training seed follows the world seed unless given explicitly.
    c.train.seed = c.world.seed;

    const auto& d = section("data");
    read(d, "prompts", c.data.prompts);
    if (d.contains("method")) c.data.method = pair_method_from_string(d.at("method").get<std::string>());

    const auto& s = section("sampler");
    read(s, "k", c.sampler.k);
    read(s, "pool", c.sampler.pool);
    read(s, "accept", c.sampler.accept);
    read(s, "temperature", c.sampler.temperature);
    read(s, "max_attempts", c.sampler.max_attempts);

    const auto& l = section("loss");
    read(l, "beta", c.loss.beta);
    read(l, "alpha", c.loss.alpha);
    read(l, "gamma", c.loss.gamma);
    read(l, "eta", c.loss.eta);
    read(l, "sft_weight", c.loss.sft_weight);
    read(l, "sft_normalized", c.loss.sft_normalized);
    if (l.contains("link")) c.loss.link.kind = link_kind_from_string(l.at("link").get<std::string>());
    read(l, "hinge_delta", c.loss.link.delta);
    read(l, "use_dispersion", c.loss.use_dispersion);
    read(l, "use_pair_offset", c.loss.use_pair_offset);
    read(l, "offset_scale", c.loss.offset_scale);
    read(l, "length_penalty", c.loss.length_penalty);

    const auto& ds = section("dispersion");
    read(ds, "floor", c.dispersion.floor);
    read(ds, "per_token_average", c.dispersion.per_token_average);

    const auto& t = section("train");
    read(t, "lr", c.train.lr);
    read(t, "epochs", c.train.epochs);
    read(t, "batch_size", c.train.batch_size);
    read(t, "warmup", c.train.warmup);
    if (t.contains("optimizer")) c.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
    read(t, "adam_beta1", c.train.adam_beta1);
    read(t, "adam_beta2", c.train.adam_beta2);
    read(t, "adam_eps", c.train.adam_eps);
    read(t, "max_grad_norm", c.train.max_grad_norm);
    read(t, "checkpoint_every", c.train.checkpoint_every);
    read(t, "seed", c.train.seed);

    const auto& e = section("eval");
    read(e, "n_eval", c.eval.n_eval);
    read(e, "holdout_fraction", c.eval.holdout_fraction);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << to_json(cfg).dump(2) << '\n';
}

std::string json_hash(const ordered_json& j) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) { return json_hash(to_json(cfg)); }

World build_world(const WorldConfig& cfg) {
  RngStream ref_rng = RngStream(cfg.seed).substream(kRefPolicyStream);
  return World{PolicyModel::random(cfg.shape(), ref_rng, cfg.ref_scale),
               SyntheticReward::random(cfg.contexts, cfg.vocab, cfg.length_bias, cfg.seed)};
}

PolicyModel initial_policy(const ExperimentConfig& cfg, const World& world) {
  PolicyModel theta = world.ref;
  RngStream rng = RngStream(cfg.train.seed).substream(kPolicyInitStream);
  for (double& v : theta.logits()) v += cfg.world.init_scale * rng.normal();
  return theta;
}

PreferenceDataset make_dataset(const ExperimentConfig& cfg, const World& world) {
  return generate_dataset(world.ref, world.reward, cfg.data.prompts, cfg.data.method, cfg.sampler,
                          RngStream(cfg.world.seed).substream(kDatasetStream));
}

}  // namespace rainbow
