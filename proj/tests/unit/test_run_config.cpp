// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "tssl/run_config.hpp"

using namespace tssl;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty document yields the defaults") {
  const RunConfig c = parse_run_config("");
  CHECK(c == RunConfig{});
  CHECK(c.loss.temperature == 0.5);
  CHECK(c.encoder.architecture == "resnet18");
}

TEST_CASE("nested yaml keys and overrides, overrides win") {
  const std::string yaml = R"(
method: TOPC
seed: 11
resolution: [16, 16, 16]
pretrain:
  epochs: 3
  learning_rate: 0.001
loss:
  temperature: 0.2
  negatives: SAME_VIEW
trials:
  num: 2
  seeds: [5, 6]
)";
  const RunConfig c = parse_run_config(yaml, {"pretrain.epochs=9", "loss.temperature = 0.3", "resolution=[24,24,24]"});
  CHECK(c.method == Method::TOPC);
  CHECK(c.seed == 11);
  CHECK(c.pretrain.epochs == 9);
  CHECK(c.pretrain.learning_rate == 0.001);
  CHECK(c.loss.temperature == 0.3);
  CHECK(c.loss.negatives == NegativeSet::SameView);
  CHECK(c.resolution == Shape3{24, 24, 24});
  CHECK(c.encoder_config().input_shape == Shape3{24, 24, 24});
  CHECK(c.trials.seeds == std::vector<std::uint64_t>{5, 6});
}

TEST_CASE("resolved yaml round trips and the hash tracks content") {
  RunConfig c = test::tiny_run_config();
  c.method = Method::TOV;
  c.loss.contrastive_weight = 0.123456789;
  c.augment.scale_range = {0.95, 1.05};
  c.data.manifest = "/data/m.csv";
  c.trials.seeds = {9, 8, 7};
  const std::string text = to_yaml(c);
  const RunConfig back = parse_run_config(text);
  CHECK(back == c);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  RunConfig d = c;
  d.seed = 1;
  CHECK(config_hash(d) != config_hash(c));
  const auto flat = flatten(c);
  CHECK(flat.at("method") == "TOV");
  CHECK(flat.at("pretrain.epochs") == "2");
  CHECK(flat.contains("synth.atrophy_rate"));
}

TEST_CASE("errors name the offending field") {
  CHECK(error_of([] { parse_run_config("pretrain:\n  epochs: many\n"); }).starts_with("pretrain.epochs:"));
  CHECK(error_of([] { parse_run_config("pretrain:\n  epochs: 0\n"); }).starts_with("pretrain.epochs:"));
  CHECK(error_of([] { parse_run_config("", {"loss.temperature=-1"}); }).starts_with("loss.temperature:"));
  CHECK(error_of([] { parse_run_config("", {"nonsense.key=1"}); }).starts_with("nonsense.key:"));
  CHECK(error_of([] { parse_run_config("", {"method=XYZ"}); }).starts_with("method:"));
  CHECK(error_of([] { parse_run_config("", {"noequals"}); }).find("key=value") != std::string::npos);
  CHECK(error_of([] { parse_run_config("", {"heads.hidden=[1]"}); }).starts_with("heads.hidden:"));
  CHECK(error_of([] { parse_run_config("", {"task.kind=CONVERSION_DETECTION", "task.num_images=3"}); })
            .starts_with("task.num_images:"));
  CHECK(error_of([] { parse_run_config("", {"trials.num=4"}); }).starts_with("trials.seeds:"));
  CHECK(error_of([] { parse_run_config("", {"data.min_gap_years=3"}); }).starts_with("data.max_gap_years:"));
  CHECK(error_of([] { parse_run_config("pretrain: [1, 2"); }).starts_with("config:"));
  CHECK(error_of([] { load_run_config("/nonexistent/x.yaml"); }).starts_with("config: file not found"));
}

TEST_CASE("relative data paths resolve against the config file") {
  test::TempDir dir("cfg");
  fs::create_directories(dir.path / "configs");
  std::ofstream(dir.path / "configs" / "a.yaml") << "data:\n  manifest: ../cohort/manifest.csv\n";
  const RunConfig c = load_run_config(dir.path / "configs" / "a.yaml");
  CHECK(c.data.manifest == (dir.path / "cohort" / "manifest.csv").lexically_normal());
  const RunConfig o = load_run_config(dir.path / "configs" / "a.yaml", {"data.manifest=rel.csv"});
  CHECK(o.data.manifest == fs::path("rel.csv"));
}

TEST_CASE("repository configs parse") {
  const fs::path configs = fs::path(TSSL_SOURCE_DIR) / "configs";
  int count = 0;
  for (const auto& entry : fs::directory_iterator(configs)) {
    if (entry.path().extension() != ".yaml") continue;
    INFO(entry.path().string());
    CHECK_NOTHROW(load_run_config(entry.path()));
    ++count;
  }
  CHECK(count > 0);
}
