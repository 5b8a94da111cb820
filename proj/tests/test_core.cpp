// Copyright 2026 The RainbowPO Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "rainbowpo/core.hpp"
#include "rainbowpo/dataset_io.hpp"
#include "rainbowpo/error.hpp"
#include "rainbowpo/rng.hpp"

using namespace rainbow;

TEST_CASE("rng: equal keys give equal draws") {
  RngStream a(42, 7);
  RngStream b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream s(5);
  RngStream x = substream(s, 3);
  RngStream y = substream(s, 3);
  for (int i = 0; i < 100; ++i) CHECK(x.uniform() == y.uniform());
}

TEST_CASE("rng: distinct labels and nesting give different streams") {
  RngStream s(2024);
  RngStream a = s.substream(1);
  RngStream b = s.substream(2);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) differ += a.uniform() != b.uniform() ? 1 : 0;
  CHECK(differ >= 990);

  RngStream nested = s.substream(1).substream(1);
  RngStream flat = s.substream(1);
  int same = 0;
  for (int i = 0; i < 1000; ++i) same += nested.uniform() == flat.uniform() ? 1 : 0;
  CHECK(same < 10);
}

TEST_CASE("rng: substream ignores the parent's position") {
  RngStream s(9);
  const RngStream before = s.substream(4);
  for (int i = 0; i < 10; ++i) s.next_u64();
  CHECK(s.substream(4) == before);
}

TEST_CASE("rng: uniform, below and normal moments") {
  RngStream r(1, 1);
  double sum = 0.0;
  double sq = 0.0;
  constexpr int kN = 200000;
  for (int i = 0; i < kN; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < kN; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / kN) < 4.0 / std::sqrt(kN));
  CHECK(std::abs(sq / kN - 1.0) < 4.0 * std::sqrt(2.0 / kN));
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 30000; ++i) ++counts[r.below(3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 4 * std::sqrt(30000 * (1.0 / 3) * (2.0 / 3)));
}

TEST_CASE("sequence and pair validation") {
  CHECK_THROWS_AS(validate_sequence(TokenSeq{}, 4, 5), InputError);
  CHECK_THROWS_AS(validate_sequence(TokenSeq{{0, 1, 2, 3, 3, 3}}, 4, 5), InputError);
  CHECK_THROWS_AS(validate_sequence(TokenSeq{{4}}, 4, 5), InputError);
  CHECK_THROWS_AS(validate_sequence(TokenSeq{{-1}}, 4, 5), InputError);
  CHECK_NOTHROW(validate_sequence(TokenSeq{{0, 3}}, 4, 5));

  PreferencePair p{0, TokenSeq{{1, 3}}, TokenSeq{{3}}, 1.0, 2.0, std::nullopt};
  CHECK_THROWS_AS(validate_pair(p, 4, 2, 5), InputError);  // score_w < score_l
  p.score_w = 2.0;
  CHECK_NOTHROW(validate_pair(p, 4, 2, 5));
  p.offset = std::nan("");
  CHECK_THROWS_AS(validate_pair(p, 4, 2, 5), InputError);
  p.offset = 0.5;
  p.ctx = 2;
  CHECK_THROWS_AS(validate_pair(p, 4, 2, 5), InputError);
  CHECK_THROWS_AS(validate_dataset({}, 4, 2, 5), InputError);
}

TEST_CASE("provenance names round-trip") {
  for (auto p : {Provenance::BestWorstOfK, Provenance::RejectionSampled, Provenance::Loaded}) {
    CHECK(provenance_from_string(to_string(p)) == p);
  }
  CHECK_THROWS_AS(provenance_from_string("Bogus"), InputError);
}

TEST_CASE("dataset records") {
  PreferencePair p{1, TokenSeq{{3, 1, 11}}, TokenSeq{{11}}, 1.5, -0.25, std::nullopt};
  CHECK(pair_to_jsonl(p) ==
        R"({"ctx":1,"yw":[3,1,11],"yl":[11],"score_w":1.5,"score_l":-0.25,"offset":null})");
  CHECK(pair_from_jsonl(pair_to_jsonl(p)) == p);
  CHECK_THROWS_AS(pair_from_jsonl("{\"ctx\":0}"), InputError);
  CHECK_THROWS_AS(pair_from_jsonl("not json"), InputError);
}

TEST_CASE("dataset file round-trip keeps every field and the order") {
  PreferenceDataset ds;
  ds.provenance = Provenance::RejectionSampled;
  RngStream r(3);
  for (int i = 0; i < 50; ++i) {
    PreferencePair p;
    p.ctx = i % 4;
    p.yw.tokens = {static_cast<TokenId>(i % 5), 5};
    p.yl.tokens = {5};
    if (i % 3 != 0) {
      p.score_w = r.normal() + 10.0;
      p.score_l = r.normal();
    }
    if (i % 5 == 0) p.offset = 1.0 / 3.0 + i;
    ds.pairs.push_back(p);
  }
  const auto dir = std::filesystem::temp_directory_path() / "rainbow_test_core";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ds.jsonl";
  save_dataset(path, ds, DatasetMetadata{ds.provenance, 77, "abc", ds.size()});
  const PreferenceDataset back = load_dataset(path);
  CHECK(back == ds);
  const auto meta = load_metadata(path);
  REQUIRE(meta.has_value());
  CHECK(meta->seed == 77);
  CHECK(meta->reward_hash == "abc");
  CHECK(meta->pairs == 50);

  // Without a sidecar the provenance is Loaded.
  std::filesystem::remove(metadata_path(path));
  CHECK(load_dataset(path).provenance == Provenance::Loaded);
  std::filesystem::remove_all(dir);
}
