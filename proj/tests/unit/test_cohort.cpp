// SPDX-License-Identifier: Apache-2.0

#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "tssl/cohort.hpp"

using namespace tssl;
using tssl::test::scan;

namespace {

std::set<std::vector<std::string>> ids_of(const SequencePool& pool, const std::string& patient) {
  std::set<std::vector<std::string>> out;
  for (int n = 2; n <= 4; ++n) {
    for (const auto& s : pool.sequences_of(patient, n)) {
      std::vector<std::string> ids;
      for (const auto& r : s.scans()) ids.push_back(r.scan_id);
      CHECK(out.insert(ids).second);
    }
  }
  return out;
}

Manifest worked_example() {
  Manifest m;
  const int offsets[] = {0, 438, 877, 1461};
  for (int i = 0; i < 4; ++i) m.add(scan("p", "s" + std::to_string(i), offsets[i]));
  m.assign("p", Split::Train);
  return m;
}

}  // namespace

TEST_CASE("worked example yields 4 pairs, 3 triplets and 1 quadruplet") {
  const Extraction e = extract_sequences(worked_example(), Split::Train);
  CHECK(e.pool.count(2) == 4);
  CHECK(e.pool.count(3) == 3);
  CHECK(e.pool.count(4) == 1);
  const auto ids = ids_of(e.pool, "p");
  CHECK(ids.contains({"s0", "s2"}));
  CHECK(ids.contains({"s0", "s2", "s3"}));
  CHECK(!ids.contains({"s1", "s3"}));
  CHECK(ids == oracle::brute_force_sequences(worked_example().scans_of("p"), 1.0, 2.5, 4));
  CHECK(e.report.sequences_by_length == std::array<std::size_t, 3>{4, 3, 1});
}

TEST_CASE("extraction equals the brute-force oracle on 200 random patients") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 8);
  std::uniform_int_distribution<int> step(30, 1200);
  std::uniform_int_distribution<int> coin(0, 9);
  Manifest m;
  for (int p = 0; p < 200; ++p) {
    const std::string id = "p" + std::to_string(p);
    int offset = 0;
    const int scans = count(rng);
    for (int s = 0; s < scans; ++s) {
      // Occasionally probe the exact bounds.
      const int c = coin(rng);
      offset += c == 0 ? 365 : (c == 1 ? 913 : step(rng));
      m.add(scan(id, "s" + std::to_string(s), offset));
    }
    m.assign(id, Split::Train);
  }
  for (int max_len : {2, 3, 4}) {
    const Extraction e = extract_sequences(m, Split::Train, 1.0, 2.5, max_len);
    std::size_t total = 0;
    for (const auto& id : m.patients()) {
      const auto expected = oracle::brute_force_sequences(m.scans_of(id), 1.0, 2.5, max_len);
      CHECK(ids_of(e.pool, id) == expected);
      total += expected.size();
    }
    CHECK(e.pool.count(2) + (max_len >= 3 ? e.pool.count(3) : 0) + (max_len == 4 ? e.pool.count(4) : 0) == total);
  }
}

TEST_CASE("extraction respects split and reports skipped patients") {
  Manifest m = worked_example();
  m.add(scan("q", "a", 0));
  m.assign("q", Split::Train);
  m.add(scan("r", "a", 0));
  m.add(scan("r", "b", 4000));
  m.assign("r", Split::Train);
  m.add(scan("t", "a", 0));
  m.add(scan("t", "b", 500));
  m.assign("t", Split::Test);
  m.add(scan("u", "a", 0));
  const Extraction e = extract_sequences(m, Split::Train);
  CHECK(e.report.patients_considered == 3);
  CHECK(e.report.patients_single_scan == 1);
  CHECK(e.report.patients_without_sequences == 1);
  CHECK(e.pool.num_patients() == 1);
  CHECK(e.report.notes.size() == 1);
  CHECK(extract_sequences(m, Split::Test).pool.count(2) == 1);
  CHECK_THROWS_AS(extract_sequences(m, Split::Train, 2.5, 1.0), ValidationError);
}

TEST_CASE("classification sets keep label-constant triplets and their prefixes") {
  Manifest m;
  const int offsets[] = {0, 438, 877};
  for (int i = 0; i < 3; ++i) m.add(scan("a", "s" + std::to_string(i), offsets[i], Label::AD));
  m.add(scan("b", "s0", 0, Label::CN));
  m.add(scan("b", "s1", 438, Label::MCI));
  m.add(scan("b", "s2", 877, Label::MCI));
  for (int i = 0; i < 3; ++i) m.add(scan("c", "s" + std::to_string(i), offsets[i], Label::Unlabeled));
  for (const char* p : {"a", "b", "c"}) m.assign(p, Split::Train);
  const Extraction e = extract_sequences(m, Split::Train);
  const ClassificationSets sets = build_classification_sets(e.pool);
  REQUIRE(sets.triplets.samples.size() == 1);
  CHECK(sets.excluded_mixed_label == 1);
  CHECK(sets.excluded_unlabeled == 1);
  CHECK(sets.triplets.samples[0].label == 2);
  CHECK(sets.pairs.samples[0].scans.size() == 2);
  CHECK(sets.singles.samples[0].scans[0].scan_id == "s0");
  CHECK(sets.pairs.samples[0].gaps_years.size() == 1);
  CHECK_NOTHROW(sets.triplets.validate());
  CHECK_NOTHROW(sets.pairs.validate());
  CHECK_NOTHROW(sets.singles.validate());
}

TEST_CASE("conversion sets label stable and converting pairs") {
  Manifest m;
  m.add(scan("a", "s0", 0, Label::MCI));
  m.add(scan("a", "s1", 500, Label::AD));
  m.add(scan("b", "s0", 0, Label::MCI));
  m.add(scan("b", "s1", 500, Label::MCI));
  m.add(scan("c", "s0", 0, Label::CN));
  m.add(scan("c", "s1", 500, Label::CN));
  for (const char* p : {"a", "b", "c"}) m.assign(p, Split::Train);
  const Extraction e = extract_sequences(m, Split::Train);
  const ConversionSets sets = build_conversion_sets(e.pool, Label::MCI, Label::AD);
  REQUIRE(sets.detection.samples.size() == 2);
  CHECK(sets.excluded == 1);
  CHECK(!sets.detection.degenerate);
  CHECK(sets.detection.class_names == std::vector<std::string>{"MCI-MCI", "MCI-AD"});
  std::map<std::string, int> labels;
  for (const auto& s : sets.detection.samples) labels[s.patient_id] = s.label;
  CHECK(labels["a"] == 1);
  CHECK(labels["b"] == 0);
  REQUIRE(sets.prediction.samples.size() == 2);
  CHECK(sets.prediction.samples[0].scans.size() == 1);

  const ConversionSets none = build_conversion_sets(e.pool, Label::CN, Label::AD);
  CHECK(none.detection.degenerate);
  CHECK_THROWS_AS(build_conversion_sets(e.pool, Label::AD, Label::AD), ValidationError);
}

TEST_CASE("epoch sampling draws at most one sequence per patient") {
  VolumeStore store;
  const Manifest m = test::phantom_cohort(store, 30, {16, 16, 16});
  const Extraction e = extract_sequences(m, Split::Train);
  REQUIRE(e.pool.num_patients() > 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto epoch = sample_epoch(e.pool, std::nullopt, seed);
    std::set<std::string> patients;
    for (const auto& s : epoch) CHECK(patients.insert(s.patient_id()).second);
    CHECK(patients.size() == e.pool.num_patients());
    for (int n : e.pool.available_lengths()) {
      const auto fixed = sample_epoch(e.pool, n, seed);
      CHECK(fixed.size() == e.pool.patients_with(n));
      for (const auto& s : fixed) CHECK(s.length() == n);
    }
  }
  CHECK(sample_epoch(e.pool, std::nullopt, 3) == sample_epoch(e.pool, std::nullopt, 3));
}

TEST_CASE("epoch sampling is uniform over a patient's sequences") {
  const Extraction e = extract_sequences(worked_example(), Split::Train);
  std::map<std::vector<std::string>, int> hits;
  const int draws = 8000;
  for (int i = 0; i < draws; ++i) {
    const auto epoch = sample_epoch(e.pool, std::nullopt, static_cast<std::uint64_t>(i));
    REQUIRE(epoch.size() == 1);
    std::vector<std::string> ids;
    for (const auto& r : epoch[0].scans()) ids.push_back(r.scan_id);
    ++hits[ids];
  }
  CHECK(hits.size() == 8);
  for (const auto& [ids, h] : hits) CHECK(std::abs(h - draws / 8.0) < 5 * std::sqrt(draws / 8.0));
}

TEST_CASE("task epoch sampling draws one sample per patient") {
  TaskDataset t;
  t.class_names = {"a", "b"};
  for (int p = 0; p < 5; ++p) {
    for (int k = 0; k < 3; ++k) {
      t.samples.push_back({"p" + std::to_string(p), {scan("p" + std::to_string(p), "s" + std::to_string(k), k * 400)}, {}, p % 2});
    }
  }
  const auto epoch = sample_task_epoch(t, 9);
  std::set<std::string> patients;
  for (const auto& s : epoch) CHECK(patients.insert(s.patient_id).second);
  CHECK(patients.size() == 5);
}
