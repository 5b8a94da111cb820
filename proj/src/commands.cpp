// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "rainbowpo/dataset_io.hpp"
#include "rainbowpo/error.hpp"

namespace rainbow {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dataset_hash(const PreferenceDataset& ds) {
  std::ostringstream os;
  write_dataset(os, ds);
  return fnv1a(os.str());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::string csv_cell(const ordered_json& v) {
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  return v.dump();
}

// Writes <stem>.csv (header from the first row's keys) and <stem>.jsonl.
void write_rows(const fs::path& dir, const std::string& stem, const std::vector<ordered_json>& rows) {
  auto csv = open_out(dir / (stem + ".csv"));
  auto jsonl = open_out(dir / (stem + ".jsonl"));
  if (!rows.empty()) {
    bool first = true;
    for (const auto& [key, value] : rows.front().items()) {
      csv << (first ? "" : ",") << key;
      first = false;
    }
    csv << '\n';
  }
  for (const auto& row : rows) {
    bool first = true;
    for (const auto& [key, value] : row.items()) {
      csv << (first ? "" : ",") << csv_cell(value);
      first = false;
    }
    csv << '\n';
    jsonl << row.dump() << '\n';
  }
  if (!csv || !jsonl) throw std::runtime_error("write failed under '" + dir.string() + "'");
}

void add_report(ordered_json& row, const EvalReport& r) {
  row["win_rate"] = r.win_rate;
  row["avg_length"] = r.avg_length;
  row["pairwise_accuracy"] = r.pairwise_accuracy;
  row["mean_reward"] = r.mean_reward;
  row["pairwise_ties"] = r.pairwise_ties;
  row["n_eval"] = r.n_eval;
  row["n_heldout"] = r.n_heldout;
}

RngStream eval_stream(const ExperimentConfig& cfg) {
  return RngStream(cfg.world.seed).substream(kEvalStream);
}

PreferenceDataset load_checked_dataset(const fs::path& path, const ExperimentConfig& cfg) {
  PreferenceDataset ds = load_dataset(path);
  try {
    validate_dataset(ds.pairs, cfg.world.vocab, cfg.world.contexts, cfg.world.max_len);
  } catch (const InputError& e) {
    throw ConfigError("dataset '" + path.string() + "' does not match the configured world (n=" +
                      std::to_string(cfg.world.vocab) + ", C=" +
                      std::to_string(cfg.world.contexts) + ", T_max=" +
                      std::to_string(cfg.world.max_len) + "): " + e.what());
  }
  return ds;
}

// One training run with per-epoch evaluation on the held-out split.
struct RunOutcome {
  EvalReport initial;
  std::vector<EvalReport> per_epoch;
  std::vector<double> epoch_loss;
  TrainResult result;
};

RunOutcome run_training(const ExperimentConfig& cfg, const World& world,
                        const PreferenceDataset& ds, const fs::path& checkpoint_dir) {
  const DatasetSplit split = split_holdout(ds.pairs, cfg.eval.holdout_fraction);
  if (split.train.empty()) throw ConfigError("holdout leaves no training pairs");
  const PolicyModel theta0 = initial_policy(cfg, world);
  RunOutcome out;
  out.initial = evaluate(theta0, world.ref, world.reward, split.held_out, cfg.eval.n_eval,
                         eval_stream(cfg));
  auto on_epoch = [&](int epoch, const PolicyModel& policy, std::span<const double> losses) {
    double total = 0.0;
    for (double l : losses) total += l;
    out.epoch_loss.push_back(losses.empty() ? 0.0 : total / static_cast<double>(losses.size()));
    out.per_epoch.push_back(evaluate(policy, world.ref, world.reward, split.held_out,
                                     cfg.eval.n_eval, eval_stream(cfg)));
    if (!checkpoint_dir.empty() && cfg.train.checkpoint_every > 0 &&
        epoch % cfg.train.checkpoint_every == 0) {
      save_checkpoint(checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), policy);
    }
  };
  out.result = train(theta0, world.ref, split.train, cfg.loss, cfg.train, cfg.dispersion, on_epoch);
  return out;
}

// Maps exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, const char* command, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << command << ": numerical failure: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const nlohmann::json::exception& e) {
    err << command << ": " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << command << ": " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace

fs::path results_root() {
  const char* env = std::getenv("RAINBOW_RESULTS_DIR");
  return (env != nullptr && *env != '\0') ? fs::path(env) : fs::path("results");
}

fs::path resolve_output_dir(const fs::path& out, const std::string& fallback) {
  if (out.empty()) return results_root() / fallback;
  if (out.is_absolute()) return out;
  return results_root() / out;
}

ExperimentConfig resolve_config(const CommandOptions& opts) {
  ExperimentConfig cfg = opts.config.empty() ? ExperimentConfig{} : load_config(opts.config);
  if (opts.seed) {
    cfg.world.seed = *opts.seed;
    cfg.train.seed = *opts.seed;
  }
  cfg.validate();
  return cfg;
}

std::string file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a(ss.str());
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int cmd_gen_data(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, "gen-data", [&] {
    const ExperimentConfig cfg = resolve_config(opts);
    const fs::path dir = resolve_output_dir(opts.out, "gen-data");
    ensure_dir(dir);
    const World world = build_world(cfg.world);
    const PreferenceDataset ds = make_dataset(cfg, world);
    DatasetMetadata meta;
    meta.provenance = ds.provenance;
    meta.seed = cfg.world.seed;
    meta.reward_hash = world.reward.hash();
    meta.pairs = ds.size();
    save_dataset(dir / "dataset.jsonl", ds, meta);
    save_config(dir / "config.json", cfg);
    log << "wrote " << ds.size() << " pairs (" << to_string(ds.provenance) << ") to "
        << (dir / "dataset.jsonl").string() << '\n';
    return kExitOk;
  });
}

int cmd_train(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, "train", [&] {
    const ExperimentConfig cfg = resolve_config(opts);
    if (opts.dataset.empty()) throw ConfigError("--dataset is required");
    const PreferenceDataset ds = load_checked_dataset(opts.dataset, cfg);
    const World world = build_world(cfg.world);
    if (const auto meta = load_metadata(opts.dataset);
        meta && !meta->reward_hash.empty() && meta->reward_hash != world.reward.hash()) {
      log << "note: dataset was generated under a different reward (" << meta->reward_hash
          << ")\n";
    }
    const fs::path dir = resolve_output_dir(opts.out, "train");
    ensure_dir(dir);

    const RunOutcome run = run_training(cfg, world, ds, dir);
    const std::string data_hash = dataset_hash(ds);
    const ordered_json cfg_json = to_json(cfg);
    std::vector<ordered_json> rows;
    for (std::size_t e = 0; e < run.per_epoch.size(); ++e) {
      const int epoch = static_cast<int>(e) + 1;
      ordered_json row;
      row["run_hash"] =
          json_hash(ordered_json{{"config", cfg_json}, {"dataset", data_hash}, {"epoch", epoch}});
      row["config_hash"] = json_hash(cfg_json);
      row["dataset_hash"] = data_hash;
      row["epoch"] = epoch;
      row["mean_loss"] = run.epoch_loss[e];
      add_report(row, run.per_epoch[e]);
      rows.push_back(std::move(row));
    }
    write_rows(dir, "results", rows);

    ordered_json initial;
    add_report(initial, run.initial);
    auto init_os = open_out(dir / "initial_eval.json");
    init_os << initial.dump(2) << '\n';

    auto trace = open_out(dir / "loss_trace.csv");
    trace << "step,loss\n";
    for (std::size_t s = 0; s < run.result.loss_trace.size(); ++s) {
      trace << s << ',' << format_number(run.result.loss_trace[s]) << '\n';
    }
    save_checkpoint(dir / "policy.ckpt", run.result.policy);
    save_config(dir / "config.json", cfg);

    log << "initial: accuracy " << run.initial.pairwise_accuracy << ", win rate "
        << run.initial.win_rate << '\n';
    for (const auto& row : rows) {
      log << "epoch " << row["epoch"] << ": loss " << row["mean_loss"].get<double>()
          << ", accuracy " << row["pairwise_accuracy"].get<double>() << ", win rate "
          << row["win_rate"].get<double>() << ", avg length " << row["avg_length"].get<double>()
          << '\n';
    }
    return kExitOk;
  });
}

int cmd_eval(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, "eval", [&] {
    const ExperimentConfig cfg = resolve_config(opts);
    const World world = build_world(cfg.world);
    const PreferenceDataset ds =
        opts.dataset.empty() ? make_dataset(cfg, world) : load_checked_dataset(opts.dataset, cfg);
    PolicyModel theta = initial_policy(cfg, world);
    if (!opts.checkpoint.empty()) {
      theta = load_checkpoint(opts.checkpoint);
      if (theta.shape() != world.ref.shape()) {
        throw ConfigError("checkpoint shape does not match the configured world");
      }
    }
    const DatasetSplit split = split_holdout(ds.pairs, cfg.eval.holdout_fraction);
    const EvalReport r =
        evaluate(theta, world.ref, world.reward, split.held_out, cfg.eval.n_eval, eval_stream(cfg));
    const fs::path dir = resolve_output_dir(opts.out, "eval");
    ensure_dir(dir);
    ordered_json row;
    row["config_hash"] = config_hash(cfg);
    row["dataset_hash"] = dataset_hash(ds);
    row["checkpoint_hash"] = opts.checkpoint.empty() ? std::string("initial")
                                                     : file_hash(opts.checkpoint);
    add_report(row, r);
    write_rows(dir, "eval", {row});
    log << "accuracy " << r.pairwise_accuracy << ", win rate " << r.win_rate << ", avg length "
        << r.avg_length << '\n';
    return kExitOk;
  });
}

// ---- ablation ------------------------------------------------------------

std::size_t AblationSpec::run_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.grid.size();
  return n;
}

AblationSpec ablation_spec_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("ablation spec must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "stages") throw ConfigError("unknown ablation key '" + key + "'");
  }
  AblationSpec spec;
  if (j.contains("base")) {
    spec.base = j.at("base");
    if (!spec.base.is_object()) throw ConfigError("ablation base must be an object");
  }
  if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty()) {
    throw ConfigError("ablation spec needs a non-empty 'stages' list");
  }
  for (const auto& s : j.at("stages")) {
    if (!s.is_object()) throw ConfigError("each ablation stage must be an object");
    AblationStage stage;
    for (const auto& [key, value] : s.items()) {
      if (key != "name" && key != "mode" && key != "set" && key != "grid") {
        throw ConfigError("unknown stage key '" + key + "'");
      }
    }
    if (!s.contains("name") || !s.at("name").is_string()) throw ConfigError("stage needs a name");
    stage.name = s.at("name").get<std::string>();
    if (s.contains("mode")) stage.mode = s.at("mode").get<std::string>();
    if (stage.mode != "add" && stage.mode != "remove" && stage.mode != "base") {
      throw ConfigError("stage '" + stage.name + "' has unknown mode '" + stage.mode + "'");
    }
    if (s.contains("set")) stage.set = s.at("set");
    if (!stage.set.is_object()) throw ConfigError("stage '" + stage.name + "' set must be an object");
    if (!s.contains("grid") || !s.at("grid").is_array() || s.at("grid").empty()) {
      throw ConfigError("stage '" + stage.name + "' has an empty grid");
    }
    for (const auto& point : s.at("grid")) {
      if (!point.is_object()) throw ConfigError("grid points must be objects");
      stage.grid.push_back(point);
    }
    spec.stages.push_back(std::move(stage));
  }
  return spec;
}

AblationSpec load_ablation_spec(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open ablation spec '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("ablation spec '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return ablation_spec_from_json(j);
}

namespace {

ExperimentConfig patched(const ExperimentConfig& cfg, const ordered_json& patch) {
  ordered_json j = to_json(cfg);
  j.merge_patch(patch);
  return config_from_json(j);
}

struct AblationRun {
  std::size_t index = 0;
  std::size_t stage = 0;
  std::size_t point = 0;
  ExperimentConfig cfg;
  std::string data_hash;
  EvalReport report;
  double final_loss = 0.0;
  std::exception_ptr error;
};

void execute_run(AblationRun& run, const PreferenceDataset* shared_data, const fs::path& run_dir) {
  const World world = build_world(run.cfg.world);
  const PreferenceDataset ds = shared_data != nullptr ? *shared_data : make_dataset(run.cfg, world);
  run.data_hash = dataset_hash(ds);
  ensure_dir(run_dir);
  const RunOutcome out = run_training(run.cfg, world, ds, run_dir);
  run.report = out.per_epoch.empty() ? out.initial : out.per_epoch.back();
  run.final_loss = out.epoch_loss.empty() ? 0.0 : out.epoch_loss.back();
  save_config(run_dir / "config.json", run.cfg);
  save_checkpoint(run_dir / "policy.ckpt", out.result.policy);
}

// Left-justifies by code points so the UTF-8 row markers line up.
std::string pad(const std::string& s, std::size_t width) {
  std::size_t points = 0;
  for (unsigned char c : s) points += (c & 0xC0) != 0x80 ? 1 : 0;
  return s + std::string(width > points ? width - points : 0, ' ');
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

int cmd_ablate(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, "ablate", [&] {
    if (opts.grid.empty()) throw ConfigError("--grid is required");
    if (opts.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const AblationSpec spec = load_ablation_spec(opts.grid);
    ExperimentConfig current = patched(resolve_config(opts), spec.base);
    if (opts.seed) {
      current.world.seed = *opts.seed;
      current.train.seed = *opts.seed;
    }
    std::optional<PreferenceDataset> shared;
    if (!opts.dataset.empty()) shared = load_checked_dataset(opts.dataset, current);

    const fs::path dir = resolve_output_dir(opts.out, "ablate");
    ensure_dir(dir);

    std::vector<std::string> adopted;  // components added so far
    std::vector<ordered_json> rows;
    std::vector<std::string> table;
    std::size_t next_index = 0;
    for (std::size_t k = 0; k < spec.stages.size(); ++k) {
      const AblationStage& stage = spec.stages[k];
      const ExperimentConfig stage_base = patched(current, stage.set);
      std::vector<AblationRun> runs(stage.grid.size());
      for (std::size_t p = 0; p < runs.size(); ++p) {
        runs[p].index = next_index++;
        runs[p].stage = k;
        runs[p].point = p;
        runs[p].cfg = patched(stage_base, stage.grid[p]);
      }
      auto run_dir = [&](const AblationRun& r) {
        char name[64];
        std::snprintf(name, sizeof name, "%03zu_s%zu_p%zu", r.index, r.stage, r.point);
        return dir / "runs" / name;
      };
      // Worker slots pull runs by index; each run owns its directory and
      // result slot, and the collector below reads them in index order.
      std::atomic<std::size_t> cursor{0};
      auto worker = [&] {
        for (std::size_t i = cursor++; i < runs.size(); i = cursor++) {
          try {
            execute_run(runs[i], shared ? &*shared : nullptr, run_dir(runs[i]));
          } catch (...) {
            runs[i].error = std::current_exception();
          }
        }
      };
      const std::size_t slots = std::min<std::size_t>(static_cast<std::size_t>(opts.jobs), runs.size());
      std::vector<std::thread> pool;
      for (std::size_t t = 1; t < slots; ++t) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
      for (const auto& r : runs) {
        if (r.error) std::rethrow_exception(r.error);
      }

      std::size_t best = 0;
      for (std::size_t p = 1; p < runs.size(); ++p) {
        if (runs[p].report.win_rate > runs[best].report.win_rate) best = p;
      }
      std::vector<std::string> components = adopted;
      std::string label = stage.name;
      if (stage.mode == "add") {
        components.push_back(stage.name);
        label = "⊕ " + stage.name;
      } else if (stage.mode == "remove") {
        std::erase(components, stage.name);
        label = "− " + stage.name;
      }
      std::string joined;
      for (const auto& c : components) joined += (joined.empty() ? "" : "+") + c;

      for (std::size_t p = 0; p < runs.size(); ++p) {
        const AblationRun& r = runs[p];
        const ordered_json cfg_json = to_json(r.cfg);
        ordered_json row;
        row["run"] = r.index;
        row["stage"] = stage.name;
        row["mode"] = stage.mode;
        row["label"] = label;
        row["point"] = p;
        row["selected"] = p == best;
        row["components"] = joined;
        row["config_hash"] = json_hash(
            ordered_json{{"config", cfg_json}, {"dataset", r.data_hash}, {"epoch", r.cfg.train.epochs}});
        row["params"] = stage.grid[p].dump();
        row["beta"] = r.cfg.loss.beta;
        row["alpha"] = r.cfg.loss.alpha;
        row["gamma"] = r.cfg.loss.gamma;
        row["eta"] = r.cfg.loss.eta;
        row["sft_weight"] = r.cfg.loss.sft_weight;
        row["use_dispersion"] = r.cfg.loss.use_dispersion;
        row["lr"] = r.cfg.train.lr;
        row["final_loss"] = r.final_loss;
        add_report(row, r.report);
        rows.push_back(std::move(row));
      }

      const EvalReport& w = runs[best].report;
      std::ostringstream line;
      line << pad(label, 14) << " | " << pad(fixed(w.win_rate, 4), 8) << " | "
           << pad(fixed(w.avg_length, 3), 10) << " | " << pad(fixed(w.pairwise_accuracy, 4), 8)
           << " | " << stage.grid[best].dump();
      table.push_back(line.str());
      log << line.str() << '\n';

      if (stage.mode != "remove") {
        current = runs[best].cfg;
        adopted = components;
      }
    }

    write_rows(dir, "ablation", rows);
    auto os = open_out(dir / "ablation_table.txt");
    os << pad("Method", 14) << " | Win rate | Avg length | Accuracy | Selected\n";
    for (const auto& line : table) os << line << '\n';
    save_config(dir / "final_config.json", current);
    log << rows.size() << " runs\n";
    return kExitOk;
  });
}

int cmd_check(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, "check", [&] {
    CheckOptions copts;
    if (opts.seed) copts.seed = *opts.seed;
    copts.fault = opts.fault;
    bool ok = true;
    for (const auto& r : run_checks(copts)) {
      log << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << fixed(r.seconds, 2) << " s)";
      if (!r.passed) log << ": " << r.detail;
      log << '\n';
      ok = ok && r.passed;
    }
    if (!ok) err << "check: invariant failures\n";
    return ok ? kExitOk : kExitCheckFailed;
  });
}

}  // namespace rainbow
