// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rainbowpo/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "rainbowpo/error.hpp"

namespace rainbow {
namespace {

using nlohmann::ordered_json;

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> read_optional(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

TokenSeq read_tokens(const ordered_json& j, const char* key) {
  TokenSeq y;
  y.tokens = j.at(key).get<std::vector<TokenId>>();
  return y;
}

}  // namespace

std::string pair_to_jsonl(const PreferencePair& pair) {
  ordered_json j;
  j["ctx"] = pair.ctx;
  j["yw"] = pair.yw.tokens;
  j["yl"] = pair.yl.tokens;
  j["score_w"] = optional_number(pair.score_w);
  j["score_l"] = optional_number(pair.score_l);
  j["offset"] = optional_number(pair.offset);
  return j.dump();
}

PreferencePair pair_from_jsonl(const std::string& line) {
  try {
    const auto j = ordered_json::parse(line);
    PreferencePair p;
    p.ctx = j.at("ctx").get<int>();
    p.yw = read_tokens(j, "yw");
    p.yl = read_tokens(j, "yl");
    p.score_w = read_optional(j, "score_w");
    p.score_l = read_optional(j, "score_l");
    p.offset = read_optional(j, "offset");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed dataset record: ") + e.what());
  }
}

void write_dataset(std::ostream& os, const PreferenceDataset& ds) {
  for (const auto& p : ds.pairs) os << pair_to_jsonl(p) << '\n';
}

PreferenceDataset read_dataset(std::istream& is) {
  PreferenceDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.pairs.push_back(pair_from_jsonl(line));
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

std::filesystem::path metadata_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p += ".meta.json";
  return p;
}

void save_dataset(const std::filesystem::path& path, const PreferenceDataset& ds,
                  const DatasetMetadata& meta) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_dataset(os, ds);
    if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
  }
  ordered_json j;
  j["provenance"] = std::string(to_string(meta.provenance));
  j["seed"] = meta.seed;
  j["reward_hash"] = meta.reward_hash;
  j["pairs"] = meta.pairs;
  const auto mpath = metadata_path(path);
  std::ofstream ms(mpath, std::ios::binary);
  if (!ms) throw std::runtime_error("cannot open '" + mpath.string() + "' for writing");
  ms << j.dump(2) << '\n';
}

void save_dataset(const std::filesystem::path& path, const PreferenceDataset& ds) {
  save_dataset(path, ds, DatasetMetadata{ds.provenance, 0, "", ds.size()});
}

std::optional<DatasetMetadata> load_metadata(const std::filesystem::path& dataset) {
  const auto mpath = metadata_path(dataset);
  std::ifstream is(mpath, std::ios::binary);
  if (!is) return std::nullopt;
  try {
    const auto j = ordered_json::parse(is);
    DatasetMetadata m;
    m.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    m.reward_hash = j.value("reward_hash", std::string{});
    m.pairs = j.value("pairs", std::size_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed metadata '" + mpath.string() + "': " + e.what());
  }
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset '" + path.string() + "'");
  auto ds = read_dataset(is);
  ds.provenance = Provenance::Loaded;
  if (auto meta = load_metadata(path)) ds.provenance = meta->provenance;
  return ds;
}

}  // namespace rainbow
