// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rainbowpo/core.hpp"

namespace rainbow {

// Line-delimited JSON, one pair per line:
//   {"ctx":0,"yw":[3,1,11],"yl":[11],"score_w":1.5,"score_l":-0.25,"offset":null}
// Absent optionals are written as null. Doubles use shortest round-trip form.
std::string pair_to_jsonl(const PreferencePair& pair);
PreferencePair pair_from_jsonl(const std::string& line);

void write_dataset(std::ostream& os, const PreferenceDataset& ds);
PreferenceDataset read_dataset(std::istream& is);

struct DatasetMetadata {
  Provenance provenance = Provenance::Loaded;
  std::uint64_t seed = 0;
  std::string reward_hash;
  std::size_t pairs = 0;

  friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

// "<dataset>.meta.json"
std::filesystem::path metadata_path(const std::filesystem::path& dataset);

// Writes the dataset and its sidecar. Throws std::runtime_error on I/O failure.
void save_dataset(const std::filesystem::path& path, const PreferenceDataset& ds,
                  const DatasetMetadata& meta);
void save_dataset(const std::filesystem::path& path, const PreferenceDataset& ds);

// Provenance is restored from the sidecar when one exists, else Loaded.
PreferenceDataset load_dataset(const std::filesystem::path& path);
std::optional<DatasetMetadata> load_metadata(const std::filesystem::path& dataset);

}  // namespace rainbow
