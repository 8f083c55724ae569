// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "tssl/data_model.hpp"

using namespace tssl;
using tssl::test::scan;

TEST_CASE("volume construction validates size and finiteness") {
  const Shape3 s{2, 3, 4};
  Volume zero(s);
  CHECK(zero.size() == 24);
  CHECK(zero.at(1, 2, 3) == 0.0f);
  CHECK_THROWS_AS(Volume(s, std::vector<float>(23)), ValidationError);
  std::vector<float> bad(24, 0.0f);
  bad[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(Volume(s, bad), ValidationError);
  bad[5] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(Volume(s, bad), ValidationError);
  CHECK_THROWS_AS(Volume(Shape3{0, 1, 1}), ValidationError);
  Volume v(s);
  v.at(1, 0, 2) = 5.0f;
  CHECK(v.data()[v.index(1, 0, 2)] == 5.0f);
  CHECK(v.index(1, 0, 2) == 14);
}

TEST_CASE("labels, splits and dates parse strictly") {
  CHECK(parse_label("AD") == Label::AD);
  CHECK(parse_label("UNLABELED") == Label::Unlabeled);
  CHECK_THROWS_AS(parse_label("ad?"), ValidationError);
  CHECK(parse_split("TEST") == Split::Test);
  CHECK_THROWS_AS(parse_split("holdout"), ValidationError);
  CHECK(parse_task_kind("CONVERSION_DETECTION") == TaskKind::ConversionDetection);
  CHECK(format_iso_date(parse_iso_date("2012-02-29")) == "2012-02-29");
  CHECK_THROWS_AS(parse_iso_date("2013-02-29"), ValidationError);
  CHECK_THROWS_AS(parse_iso_date("2013-2-01"), ValidationError);
  CHECK_THROWS_AS(parse_iso_date("2013/02/01"), ValidationError);
  CHECK(years_between(parse_iso_date("2010-01-01"), parse_iso_date("2011-01-01")) == doctest::Approx(365.0 / 365.25));
}

TEST_CASE("manifest rejects duplicates and conflicting splits") {
  Manifest m;
  m.add(scan("p1", "s2", 400));
  m.add(scan("p1", "s1", 0));
  CHECK_THROWS_AS(m.add(scan("p1", "s1", 10)), ValidationError);
  const auto scans = m.scans_of("p1");
  REQUIRE(scans.size() == 2);
  CHECK(scans[0].scan_id == "s1");
  CHECK_THROWS_AS(m.validate_splits(), ValidationError);
  m.assign("p1", Split::Train);
  m.assign("p1", Split::Train);
  CHECK_THROWS_AS(m.assign("p1", Split::Test), ValidationError);
  CHECK_NOTHROW(m.validate_splits());
}

TEST_CASE("sequence invariants") {
  auto a = scan("p", "a", 0);
  auto b = scan("p", "b", 438);
  auto c = scan("p", "c", 877);
  const Sequence s = Sequence::make({a, b, c});
  CHECK(s.length() == 3);
  REQUIRE(s.gaps_years().size() == 2);
  CHECK(s.gaps_years()[0] == doctest::Approx(438 / 365.25));
  CHECK_THROWS_AS(Sequence::make({a}), ValidationError);
  CHECK_THROWS_AS(Sequence::make({b, a}), ValidationError);
  CHECK_THROWS_AS(Sequence::make({a, scan("q", "b", 438)}), ValidationError);
  CHECK_THROWS_AS(Sequence::make({a, scan("p", "x", 200)}), ValidationError);
  CHECK_THROWS_AS(Sequence::make({a, scan("p", "x", 1000)}), ValidationError);
  CHECK_THROWS_AS(Sequence::make({a, b, c, scan("p", "d", 1300), scan("p", "e", 1700)}), ValidationError);
  // Bounds are inclusive.
  CHECK_NOTHROW(Sequence::make({a, scan("p", "x", 365)}, 365 / 365.25, 2.5));
}

TEST_CASE("task dataset validation") {
  TaskDataset t;
  t.num_input_images = 2;
  t.class_names = {"neg", "pos"};
  t.samples.push_back({"p", {scan("p", "a", 0), scan("p", "b", 400)}, {400 / 365.25}, 1});
  CHECK_NOTHROW(t.validate());
  t.samples[0].label = 2;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t.samples[0].label = 0;
  t.samples[0].gaps_years.clear();
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t.num_input_images = 4;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}
