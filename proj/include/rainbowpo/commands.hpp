// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainbowpo/checks.hpp"
#include "rainbowpo/experiment.hpp"

namespace rainbow {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // invariant or check failure, non-finite training
  kExitConfigError = 2,  // bad config, bad input, I/O failure
};

struct CommandOptions {
  std::filesystem::path config;      // empty: built-in defaults
  std::filesystem::path dataset;
  std::filesystem::path out;         // relative paths resolve under the results root
  std::filesystem::path checkpoint;  // eval only
  std::filesystem::path grid;        // ablate only
  std::optional<std::uint64_t> seed; // overrides world.seed and train.seed
  int jobs = 1;                      // parallel ablation runs
  CheckFault fault = CheckFault::None;
};

// RAINBOW_RESULTS_DIR, else "results".
std::filesystem::path results_root();
// Absolute `out` as given; relative `out` under results_root(); empty `out`
// becomes results_root() / fallback.
std::filesystem::path resolve_output_dir(const std::filesystem::path& out,
                                         const std::string& fallback);

// Config file (or defaults) with the --seed override applied.
ExperimentConfig resolve_config(const CommandOptions& opts);

// FNV-1a digest of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Shortest round-trip decimal form, used for every number in delimited output.
std::string format_number(double v);

// Each command logs progress to `log` and returns an ExitCode; errors are
// reported on `err`.
int cmd_gen_data(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_train(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_eval(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_ablate(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_check(const CommandOptions& opts, std::ostream& log, std::ostream& err);

// Greedy ablation spec:
//   {"base": {<config patch>},
//    "stages": [{"name": "LN", "mode": "add", "set": {<patch>},
//                "grid": [{<patch>}, ...]}, ...]}
// mode "add" (default) adopts the stage winner; "remove" reports the
// component's removal from the current configuration without adopting it;
// "base" evaluates the starting point and adopts its winner.
struct AblationStage {
  std::string name;
  std::string mode = "add";
  nlohmann::ordered_json set = nlohmann::ordered_json::object();
  std::vector<nlohmann::ordered_json> grid;
};

struct AblationSpec {
  nlohmann::ordered_json base = nlohmann::ordered_json::object();
  std::vector<AblationStage> stages;
  std::size_t run_count() const noexcept;
};

// Throws ConfigError on a malformed spec or an empty grid.
AblationSpec ablation_spec_from_json(const nlohmann::ordered_json& j);
AblationSpec load_ablation_spec(const std::filesystem::path& path);

}  // namespace rainbow
