// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "tssl/io.hpp"

using namespace tssl;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("volume files round trip bitwise") {
  test::TempDir dir("io");
  std::mt19937_64 rng(1);
  const Volume v = test::random_volume({3, 4, 5}, rng);
  const fs::path header = dir.path / "a" / "v.json";
  write_volume(header, v, {1.0, 1.5, 2.0});
  CHECK(read_volume(header) == v);
  const VolumeHeader h = read_volume_header(header);
  CHECK(h.shape == Shape3{3, 4, 5});
  CHECK(h.spacing[2] == 2.0);
  CHECK(h.dtype == "float32-le");

  CHECK_THROWS_AS(write_volume(dir.path / "v.raw", v), IoError);
  CHECK_THROWS_AS(read_volume(dir.path / "missing.json"), IoError);
  fs::resize_file(dir.path / "a" / "v.raw", 8);
  CHECK_THROWS_AS(read_volume(header), IoError);
}

TEST_CASE("volume store caches by normalized path") {
  test::TempDir dir("store");
  std::mt19937_64 rng(2);
  const Volume v = test::random_volume({2, 2, 2}, rng);
  write_volume(dir.path / "v.json", v);
  VolumeStore store;
  const Volume& a = store.get(dir.path / "v.json");
  const Volume& b = store.get(dir.path / "." / "v.json");
  CHECK(&a == &b);
  CHECK(store.size() == 1);
  store.put("/virtual/x.json", v);
  CHECK(store.get("/virtual/./x.json") == v);
}

TEST_CASE("manifest csv round trip with relative volume paths") {
  test::TempDir dir("manifest");
  Manifest m;
  m.add(test::scan("p1", "s1", 0, Label::CN));
  m.add(test::scan("p1", "s2", 500, Label::MCI));
  Manifest local;
  for (ScanRecord r : m.records()) {
    r.volume_path = dir.path / "volumes" / (r.scan_id + ".json");
    local.add(r);
  }
  local.assign("p1", Split::Val);
  write_manifest_csv(dir.path / "manifest.csv", local);
  write_split_csv(dir.path / "splits.csv", local);

  std::ifstream in(dir.path / "manifest.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "patient_id,scan_id,acquisition_date,label,volume_path,dataset_id");
  CHECK(first.find("volumes/s1.json") != std::string::npos);
  CHECK(first.find(dir.path.string()) == std::string::npos);

  ManifestLoad load = read_manifest_csv(dir.path / "manifest.csv");
  CHECK(load.rejected.empty());
  read_split_csv(dir.path / "splits.csv", load.manifest);
  CHECK(load.manifest.records() == local.records());
  CHECK(load.manifest.split_of("p1") == Split::Val);
}

TEST_CASE("malformed manifest rows are rejected with line numbers") {
  test::TempDir dir("bad");
  write_text(dir.path / "m.csv",
             "patient_id,scan_id,acquisition_date,label,volume_path,dataset_id\n"
             "p1,s1,2010-01-01,CN,v/s1.json,D\n"
             "p1,s2,2010-13-01,CN,v/s2.json,D\n"
             "p1,s3,2011-01-01,XX,v/s3.json,D\n"
             "p1,s4,2011-01-01,CN\n"
             "p1,s1,2012-01-01,CN,v/s1b.json,D\n");
  const ManifestLoad load = read_manifest_csv(dir.path / "m.csv");
  CHECK(load.manifest.records().size() == 1);
  REQUIRE(load.rejected.size() == 4);
  CHECK(load.rejected[0].line == 3);
  CHECK(load.rejected[2].line == 5);
  CHECK(load.rejected[3].reason.find("duplicate") != std::string::npos);

  write_text(dir.path / "h.csv", "id,scan\n");
  CHECK_THROWS_AS(read_manifest_csv(dir.path / "h.csv"), IoError);
  CHECK_THROWS_AS(read_manifest_csv(dir.path / "none.csv"), IoError);
}
