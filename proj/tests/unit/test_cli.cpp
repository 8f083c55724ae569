// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"

using namespace tssl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
  fs::path run_dir;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line))
    if (line.starts_with("run ")) r.run_dir = line.substr(4);
  return r;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const char* kTinyConfig = R"(method: TOPC
seed: 3
resolution: [16, 16, 16]
encoder:
  architecture: resnet10
  width_multiplier: 0.03125
  stem_kernel: 3
heads:
  hidden: [12, 8]
  projection_dim: 6
pretrain:
  epochs: 1
  batch_size: 4
  learning_rate: 0.001
finetune:
  epochs: 1
  batch_size: 4
augment:
  translation_max_vox: 1.0
downstream_augment:
  translation_max_vox: 1.0
data:
  manifest: cohort/manifest.csv
  splits: cohort/splits.csv
trials:
  num: 2
  seeds: [1, 2]
synth:
  num_patients: 24
  resolution: [16, 16, 16]
  atrophy_rate: [0.05, 0.055, 0.06]
  gap_years: [1.0, 2.0]
  max_scans: 4
  out_dir: cohort
)";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  CHECK(invoke({"pretrain"}).code == cli::kExitUsage);
  const Result missing = invoke({"synth", "--config", "/nonexistent/config.yaml"});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(invoke({"--help"}).code == cli::kExitOk);
}

TEST_CASE("full pipeline through the command line") {
  test::TempDir dir("cli");
  setenv(cli::kRunRootEnv, (dir.path / "runs").c_str(), 1);
  const fs::path config = dir.path / "tiny.yaml";
  std::ofstream(config) << kTinyConfig;
  const std::string c = config.string();

  SUBCASE("missing manifest names the field and exits with 1") {
    std::ofstream(dir.path / "nodata.yaml") << "method: TOP\n";
    const Result r = invoke({"extract", "-c", (dir.path / "nodata.yaml").string()});
    CHECK(r.code == cli::kExitFailure);
    CHECK(r.err.find("data.manifest") != std::string::npos);
    const Result bad = invoke({"extract", "-c", c, "--set", "pretrain.epochs=zero"});
    CHECK(bad.code == cli::kExitFailure);
    CHECK(bad.err.find("pretrain.epochs") != std::string::npos);
  }

  SUBCASE("synth, extract, pretrain, finetune, evaluate, trials") {
    const Result synth = invoke({"synth", "-c", c});
    INFO(synth.err);
    REQUIRE(synth.code == cli::kExitOk);
    CHECK(synth.run_dir.parent_path() == dir.path / "runs");
    CHECK(synth.run_dir.filename().string().starts_with("synth-"));
    CHECK(fs::exists(synth.run_dir / "config.yaml"));
    CHECK(read_json(synth.run_dir / "verify.json").at("findings").empty());
    CHECK(fs::exists(dir.path / "cohort" / "manifest.csv"));

    const Result extract = invoke({"extract", "-c", c});
    REQUIRE(extract.code == cli::kExitOk);
    CHECK(fs::exists(extract.run_dir / "extraction_report.json"));
    CHECK(fs::exists(extract.run_dir / "sequences.json"));

    const Result pre = invoke({"pretrain", "-c", c, "--method", "topc", "-s", "pretrain.epochs=2"});
    INFO(pre.err);
    REQUIRE(pre.code == cli::kExitOk);
    const fs::path best = pre.run_dir / "checkpoints" / "best.json";
    REQUIRE(fs::exists(best));
    CHECK(read_json(best).at("method") == "TOPC");
    std::ifstream snapshot(pre.run_dir / "config.yaml");
    const std::string snap((std::istreambuf_iterator<char>(snapshot)), {});
    CHECK(snap.find("epochs: 2") != std::string::npos);
    CHECK(fs::exists(pre.run_dir / "train_log.jsonl"));

    const Result eval_pre = invoke({"evaluate", "-c", c, "--checkpoint", best.string()});
    REQUIRE(eval_pre.code == cli::kExitOk);

    const Result ft = invoke({"finetune", "-c", c, "--checkpoint", best.string(), "-s", "task.num_images=2"});
    INFO(ft.err);
    REQUIRE(ft.code == cli::kExitOk);
    const auto metrics = read_json(ft.run_dir / "metrics.json");
    CHECK(metrics.contains("test_auc"));
    const fs::path ft_best = ft.run_dir / "checkpoints" / "best.json";
    REQUIRE(fs::exists(ft_best));

    const Result ev = invoke({"evaluate", "-c", c, "--checkpoint", ft_best.string(), "-s", "task.num_images=2"});
    INFO(ev.err);
    REQUIRE(ev.code == cli::kExitOk);

    const Result tr = invoke({"trials", "-c", c, "--checkpoint", best.string()});
    INFO(tr.err);
    REQUIRE(tr.code == cli::kExitOk);
    const auto report = read_json(tr.run_dir / "report.json");
    CHECK(report.at("num_trials") == 2);
    CHECK(fs::exists(tr.run_dir / "report.txt"));

    const Result sup = invoke({"supervised", "-c", c});
    REQUIRE(sup.code == cli::kExitOk);
    CHECK(fs::exists(sup.run_dir / "metrics.json"));

    const Result refused = invoke({"finetune", "-c", c, "--checkpoint", (sup.run_dir / "checkpoints" / "best.json").string()});
    CHECK(refused.code == cli::kExitFailure);
  }
  unsetenv(cli::kRunRootEnv);
}

TEST_CASE("--run-root is used when the environment variable is unset") {
  test::TempDir dir("cli-root");
  unsetenv(cli::kRunRootEnv);
  const fs::path config = dir.path / "tiny.yaml";
  std::ofstream(config) << kTinyConfig;
  const Result r = invoke({"synth", "-c", config.string(), "--run-root", (dir.path / "elsewhere").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.run_dir.parent_path() == dir.path / "elsewhere");
}
