// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "tssl/cohort.hpp"
#include "tssl/io.hpp"
#include "tssl/synth.hpp"

using namespace tssl;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.num_patients = 15;
  return s;
}

bool has_finding(const CohortReport& r, const std::string& kind) {
  return std::any_of(r.findings.begin(), r.findings.end(), [&](const CohortFinding& f) { return f.kind == kind; });
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("written cohort loads back and passes verification") {
  test::TempDir dir("synth");
  const WrittenCohort w = generate_cohort(small_spec(), dir.path);
  ManifestLoad load = read_manifest_csv(w.manifest_path);
  CHECK(load.rejected.empty());
  read_split_csv(w.split_path, load.manifest);
  CHECK(load.manifest.patients().size() == 15);
  CHECK_NOTHROW(load.manifest.validate_splits());
  VolumeStore store;
  const CohortReport report = verify_cohort(load.manifest, store);
  INFO(report.to_json());
  CHECK(report.ok());
  CHECK(report.patients == 15);
  for (const auto& r : load.manifest.records()) CHECK(store.get(r).shape() == Shape3{32, 32, 32});
}

TEST_CASE("cohort shape follows the spec") {
  PhantomSpec spec;
  spec.num_patients = 60;
  const GeneratedCohort c = generate_cohort_in_memory(spec, "/virtual");
  std::map<Split, int> splits;
  for (const auto& p : c.manifest.patients()) {
    const auto scans = c.manifest.scans_of(p);
    CHECK(scans.size() >= 2);
    CHECK(scans.size() <= 4);
    for (std::size_t i = 1; i < scans.size(); ++i) {
      const double gap = years_between(scans[i - 1].acquisition_date, scans[i].acquisition_date);
      CHECK(gap >= 1.0);
      CHECK(gap <= 2.5);
    }
    ++splits[*c.manifest.split_of(p)];
  }
  CHECK(splits[Split::Train] == doctest::Approx(36).epsilon(0.1));
  CHECK(splits[Split::Test] >= 12);
  CHECK(splits[Split::Val] >= 6);
  CHECK(c.volumes.size() == c.manifest.records().size());
}

TEST_CASE("generation is deterministic for a seed") {
  test::TempDir a("synth-a"), b("synth-b");
  generate_cohort(small_spec(), a.path);
  generate_cohort(small_spec(), b.path);
  CHECK(slurp(a.path / "manifest.csv") == slurp(b.path / "manifest.csv"));
  CHECK(slurp(a.path / "splits.csv") == slurp(b.path / "splits.csv"));
  for (const auto& e : fs::recursive_directory_iterator(a.path / "volumes")) {
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(b.path / fs::relative(e.path(), a.path)));
  }
  PhantomSpec other = small_spec();
  other.seed = 8;
  CHECK(generate_cohort_in_memory(other, "/v").volumes != generate_cohort_in_memory(small_spec(), "/v").volumes);
}

TEST_CASE("without conversions every patient keeps one label") {
  PhantomSpec spec;
  spec.num_patients = 40;
  spec.conversion_probability = 0.0;
  const GeneratedCohort c = generate_cohort_in_memory(spec, "/virtual");
  for (const auto& p : c.manifest.patients()) {
    const auto scans = c.manifest.scans_of(p);
    for (const auto& r : scans) CHECK(r.label == scans.front().label);
  }
  spec.conversion_probability = 1.0;
  const GeneratedCohort all = generate_cohort_in_memory(spec, "/virtual");
  int changed = 0;
  for (const auto& p : all.manifest.patients()) {
    const auto scans = all.manifest.scans_of(p);
    changed += scans.front().label != scans.back().label;
  }
  CHECK(changed > 0);
}

TEST_CASE("ventricles grow and classes separate") {
  PhantomSpec spec;
  spec.num_patients = 30;
  spec.conversion_probability = 0.0;
  spec.noise_std = 0.0;
  const GeneratedCohort c = generate_cohort_in_memory(spec, "/virtual");
  std::map<std::string, const Volume*> by_path;
  for (const auto& [p, v] : c.volumes) by_path[p.string()] = &v;
  std::array<double, 3> sum{}, n{};
  for (const auto& p : c.manifest.patients()) {
    const auto scans = c.manifest.scans_of(p);
    std::size_t prev = 0;
    for (const auto& r : scans) {
      const std::size_t count = ventricle_voxel_count(*by_path.at(r.volume_path.string()));
      CHECK(count > prev);
      prev = count;
    }
    const int k = class_index(scans.front().label);
    sum[k] += static_cast<double>(ventricle_voxel_count(*by_path.at(scans.front().volume_path.string())));
    n[k] += 1;
  }
  CHECK(sum[0] / n[0] < sum[1] / n[1]);
  CHECK(sum[1] / n[1] < sum[2] / n[2]);
}

TEST_CASE("verification reports missing files and regressing labels") {
  test::TempDir dir("synth-bad");
  const WrittenCohort w = generate_cohort(small_spec(), dir.path);
  ManifestLoad load = read_manifest_csv(w.manifest_path);
  read_split_csv(w.split_path, load.manifest);

  const ScanRecord victim = load.manifest.records().front();
  fs::remove(victim.volume_path);
  {
    VolumeStore store;
    const CohortReport r = verify_cohort(load.manifest, store);
    CHECK(!r.ok());
    CHECK(has_finding(r, "missing-file"));
    CHECK(r.findings.front().scan_id == victim.scan_id);
  }

  // Rewrite one patient's history as AD followed by CN.
  Manifest edited;
  std::string target;
  for (const auto& p : load.manifest.patients()) {
    if (p != victim.patient_id) {
      target = p;
      break;
    }
  }
  const auto scans = load.manifest.scans_of(target);
  for (ScanRecord r : load.manifest.records()) {
    if (r.patient_id == target) r.label = r.scan_id == scans.front().scan_id ? Label::AD : Label::CN;
    edited.add(r);
  }
  for (const auto& [p, s] : load.manifest.split_assignment()) edited.assign(p, s);
  VolumeStore store;
  const CohortReport r = verify_cohort(edited, store);
  CHECK(has_finding(r, "label-order"));
  const auto j = r.to_json();
  CHECK(j.find("label-order") != std::string::npos);
}

TEST_CASE("invalid specs are rejected") {
  PhantomSpec s;
  s.min_scans = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.resolution = {8, 8, 8};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.split_fractions = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.atrophy_rate = {0.2, 0.3, 0.4};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
