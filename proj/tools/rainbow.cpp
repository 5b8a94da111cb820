// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

// rainbow: data generation, training, evaluation, greedy ablation and the
// invariant-check suite for the toy RainbowPO world.

#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "rainbowpo/commands.hpp"

int main(int argc, char** argv) {
  using rainbow::CommandOptions;

  CLI::App app{"Unified preference optimization on a synthetic sequence world"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;
  std::string fault = "none";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory; relative paths go under $RAINBOW_RESULTS_DIR");
    sub->add_option("--seed", seed, "overrides world.seed and train.seed");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a preference dataset");
  common(gen);

  auto* tr = app.add_subcommand("train", "train on a dataset, evaluating after each epoch");
  common(tr);
  tr->add_option("--dataset", opts.dataset, "dataset (JSONL)")->required()->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (default: the initial policy)");
  common(ev);
  ev->add_option("--dataset", opts.dataset, "dataset whose held-out split is scored")
      ->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", opts.checkpoint, "policy checkpoint")->check(CLI::ExistingFile);

  auto* ab = app.add_subcommand("ablate", "greedy component-by-component search");
  common(ab);
  ab->add_option("--grid", opts.grid, "ablation spec (JSON)")->required()->check(CLI::ExistingFile);
  ab->add_option("--dataset", opts.dataset, "shared dataset; default regenerates per run")
      ->check(CLI::ExistingFile);
  ab->add_option("--jobs", opts.jobs, "parallel run slots")->check(CLI::PositiveNumber);

  auto* ck = app.add_subcommand("check", "run the invariant suite");
  ck->add_option("--seed", seed, "suite seed");
  ck->add_option("--inject-fault", fault, "deliberate mutation")
      ->check(CLI::IsMember({"none", "dpo-sign"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rainbow::kExitConfigError;
  }

  for (auto* sub : {gen, tr, ev, ab, ck}) {
    if (sub->count("--seed") > 0) opts.seed = seed;
  }
  if (fault == "dpo-sign") opts.fault = rainbow::CheckFault::LogisticSignFlip;

  if (gen->parsed()) return rainbow::cmd_gen_data(opts, std::cout, std::cerr);
  if (tr->parsed()) return rainbow::cmd_train(opts, std::cout, std::cerr);
  if (ev->parsed()) return rainbow::cmd_eval(opts, std::cout, std::cerr);
  if (ab->parsed()) return rainbow::cmd_ablate(opts, std::cout, std::cerr);
  return rainbow::cmd_check(opts, std::cout, std::cerr);
}
