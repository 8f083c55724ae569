// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "tssl/checkpoint.hpp"
#include "tssl/permutation.hpp"
#include "tssl/trainer.hpp"

using namespace tssl;
using namespace tssl::test;

namespace {

struct Cohort {
  VolumeStore store;
  Manifest manifest;
  Extraction train{SequencePool(Split::Train), {}};
  Extraction val{SequencePool(Split::Val), {}};
  NormStats norm;
  RunConfig cfg = tiny_run_config();

  Cohort() {
    manifest = phantom_cohort(store, 24, cfg.resolution, 5);
    train = extract_sequences(manifest, Split::Train);
    val = extract_sequences(manifest, Split::Val);
    norm = train_norm_stats(manifest, store);
  }
  PretrainData pretrain_data() { return {&train.pool, &val.pool, &store, norm}; }
};

Cohort& cohort() {
  static Cohort c;
  return c;
}

bool same_parameters(Network& a, Network& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value != pb[i]->value) return false;
  return true;
}

}  // namespace

TEST_CASE("order verification permutes before padding") {
  Rng rng(1);
  for (int n = 2; n <= 4; ++n) {
    std::map<std::vector<int>, int> counts;
    int positives = 0;
    const int draws = 6000;
    for (int i = 0; i < draws; ++i) {
      const TovSample s = make_tov_sample(n, rng);
      CHECK(s.length == n);
      std::vector<int> head(s.slots.begin(), s.slots.begin() + n);
      std::vector<int> sorted = head;
      std::sort(sorted.begin(), sorted.end());
      for (int k = 0; k < n; ++k) CHECK(sorted[k] == k);
      for (int k = n; k < kTovLength; ++k) CHECK(s.slots[k] == -1);
      CHECK(s.label == (permutation_to_index(head) == 0 ? 1 : 0));
      positives += s.label;
      if (s.label == 0) ++counts[head];
    }
    CHECK(std::abs(positives - draws / 2) < 5 * std::sqrt(draws / 4.0));
    // Negatives are uniform over the n! - 1 non-identity orders.
    CHECK(counts.size() == static_cast<std::size_t>(factorial(n) - 1));
    const double expect = (draws - positives) / static_cast<double>(factorial(n) - 1);
    for (const auto& [order, c] : counts) CHECK(std::abs(c - expect) < 5 * std::sqrt(expect) + 1);
  }
  CHECK_THROWS_AS(make_tov_sample(5, rng), ValidationError);
}

TEST_CASE("order prediction targets are uniform over n!") {
  Rng rng(2);
  std::vector<int> hits(24, 0);
  for (int i = 0; i < 24000; ++i) {
    const TopSample s = make_top_sample(4, rng);
    CHECK(permutation_to_index(s.order) == s.class_index);
    ++hits[s.class_index];
  }
  for (int h : hits) CHECK(std::abs(h - 1000) < 160);
}

TEST_CASE("one sequence length per order-prediction epoch, one sample per patient") {
  Cohort& c = cohort();
  const auto lengths = c.train.pool.available_lengths();
  REQUIRE(lengths.size() >= 2);
  std::map<int, int> drawn;
  for (int epoch = 1; epoch <= 60; ++epoch) {
    for (Method m : {Method::TOP, Method::TOPC}) {
      const EpochPlan p = plan_pretrain_epoch(m, c.train.pool, 3, epoch);
      REQUIRE(p.n.has_value());
      ++drawn[*p.n];
      std::set<std::string> patients;
      for (const auto& s : p.sequences) {
        CHECK(s.length() == *p.n);
        CHECK(patients.insert(s.patient_id()).second);
      }
      CHECK(patients.size() == c.train.pool.patients_with(*p.n));
    }
    const EpochPlan tov = plan_pretrain_epoch(Method::TOV, c.train.pool, 3, epoch);
    CHECK(!tov.n.has_value());
    std::set<std::string> patients;
    for (const auto& s : tov.sequences) CHECK(patients.insert(s.patient_id()).second);
    CHECK(patients.size() == c.train.pool.num_patients());
  }
  for (int n : lengths) CHECK(drawn[n] > 10);
  CHECK(plan_pretrain_epoch(Method::TOP, c.train.pool, 3, 4).sequences ==
        plan_pretrain_epoch(Method::TOP, c.train.pool, 3, 4).sequences);
}

TEST_CASE("an empty length pool is redrawn") {
  SequencePool pool(Split::Train);
  pool.add(Sequence::make({scan("p", "a", 0), scan("p", "b", 400)}));
  for (int epoch = 1; epoch < 20; ++epoch) {
    const EpochPlan p = plan_pretrain_epoch(Method::TOP, pool, 1, epoch);
    CHECK(p.n == 2);
    CHECK(p.sequences.size() == 1);
  }
}

TEST_CASE("task epochs hold one sample per patient") {
  Cohort& c = cohort();
  const ClassificationSets sets = build_classification_sets(c.train.pool);
  REQUIRE(!sets.singles.samples.empty());
  for (int epoch = 1; epoch < 10; ++epoch) {
    std::set<std::string> patients;
    for (const auto& s : plan_task_epoch(sets.singles, 4, epoch)) CHECK(patients.insert(s.patient_id).second);
  }
}

TEST_CASE("fixed seeds reproduce the first two training steps") {
  Cohort& c = cohort();
  for (Method m : {Method::TOV, Method::TOP, Method::TOPC}) {
    RunConfig cfg = c.cfg;
    cfg.method = m;
    cfg.seed = 42;
    TrainOptions opts;
    opts.max_steps = 2;
    PretrainData d = c.pretrain_data();
    d.val = nullptr;
    TrainResult a = pretrain(cfg, d, opts);
    TrainResult b = pretrain(cfg, d, opts);
    REQUIRE(a.step_losses.size() == 2);
    CHECK(a.step_losses == b.step_losses);
    CHECK(same_parameters(a.model, b.model));
    cfg.seed = 43;
    TrainResult other = pretrain(cfg, d, opts);
    CHECK(other.step_losses != a.step_losses);
  }
}

TEST_CASE("pre-training writes logs and reloadable checkpoints") {
  Cohort& c = cohort();
  TempDir dir("pretrain");
  RunConfig cfg = c.cfg;
  cfg.method = Method::TOPC;
  TrainOptions opts;
  opts.checkpoint_dir = dir.path / "ckpt";
  opts.log_path = dir.path / "log.jsonl";
  int callbacks = 0;
  opts.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  TrainResult r = pretrain(cfg, c.pretrain_data(), opts);
  CHECK(callbacks == cfg.pretrain.epochs);
  CHECK(r.log.size() == static_cast<std::size_t>(cfg.pretrain.epochs));
  for (const auto& rec : r.log) {
    CHECK(rec.n.has_value());
    CHECK(rec.val_metric.has_value());
    CHECK(std::isfinite(rec.loss));
  }
  std::ifstream log(opts.log_path);
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("phase") == "pretrain-TOPC");
    CHECK(j.at("n").is_number());
    ++lines;
  }
  CHECK(lines == cfg.pretrain.epochs);

  REQUIRE(std::filesystem::exists(opts.checkpoint_dir / "best.json"));
  REQUIRE(std::filesystem::exists(opts.checkpoint_dir / "last.bin"));
  LoadedCheckpoint best = load_checkpoint(r.checkpoint);
  CHECK(best.meta.epoch == r.best_epoch);
  CHECK(best.meta.config_hash == config_hash(cfg));
  CHECK(best.meta.norm.train_mean == c.norm.train_mean);
  CHECK(same_parameters(best.network, r.model));
  CHECK(best.network.has_projection());
}

TEST_CASE("fine-tuning reuses the encoder and respects learning-rate groups") {
  Cohort& c = cohort();
  RunConfig cfg = c.cfg;
  cfg.method = Method::TOP;
  TrainResult pre = pretrain(cfg, c.pretrain_data());
  const ClassificationSets train = build_classification_sets(c.train.pool);
  const ClassificationSets val = build_classification_sets(c.val.pool);

  cfg.finetune.lr_encoder = 0.0;
  for (const TaskDataset* task : {&train.singles, &train.pairs}) {
    TaskData data{task, nullptr, &c.store, c.norm};
    TrainResult ft = finetune(pre.model, data, cfg);
    CHECK(ft.model.has_downstream());
    CHECK(ft.model.top_head_lengths().empty());
    const auto enc_a = pre.model.encoder_parameters();
    const auto enc_b = ft.model.encoder_parameters();
    for (std::size_t i = 0; i < enc_a.size(); ++i) CHECK(enc_a[i]->value == enc_b[i]->value);
    const auto probs = predict(ft.model, *task, c.store, c.norm, cfg.normalization);
    REQUIRE(probs.size() == task->samples.size());
    for (const auto& p : probs) {
      CHECK(p.size() == 3);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    }
  }

  Network sup(Method::Supervised, cfg.encoder_config(), cfg.heads, 1);
  TaskData data{&train.singles, &val.singles, &c.store, c.norm};
  CHECK_THROWS_AS(finetune(sup, data, cfg), ValidationError);
  RunConfig wider = cfg;
  wider.encoder.width_multiplier *= 2;
  CHECK_THROWS_AS(finetune(pre.model, data, wider), ValidationError);
}

TEST_CASE("degenerate tasks are refused") {
  Cohort& c = cohort();
  TaskDataset one;
  one.class_names = {"only"};
  one.samples.push_back({"p", {scan("p", "a", 0)}, {}, 0});
  TaskData data{&one, nullptr, &c.store, c.norm};
  CHECK_THROWS_AS(train_supervised(data, c.cfg), ValidationError);
  TaskDataset degenerate;
  degenerate.class_names = {"neg", "pos"};
  degenerate.degenerate = true;
  degenerate.samples = one.samples;
  data.train = &degenerate;
  CHECK_THROWS_AS(train_supervised(data, c.cfg), ValidationError);
}

TEST_CASE("pretext accuracies and task splits") {
  Cohort& c = cohort();
  Network net(Method::TOP, c.cfg.encoder_config(), c.cfg.heads, 1);
  for (int n : c.val.pool.available_lengths()) {
    const double acc = top_accuracy(net, c.val.pool, n, c.store, c.norm, c.cfg.normalization);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  Network tov(Method::TOV, c.cfg.encoder_config(), c.cfg.heads, 1);
  const double b = tov_accuracy(tov, c.val.pool, c.store, c.norm, c.cfg.normalization);
  CHECK(b >= 0.0);
  CHECK(b <= 1.0);

  RunConfig cfg = c.cfg;
  cfg.task.num_images = 3;
  const TaskSplits s = make_task_splits(c.manifest, cfg);
  CHECK(s.train.num_input_images == 3);
  CHECK(s.test.num_input_images == 3);
  CHECK(!s.train.samples.empty());
  std::set<std::string> train_patients;
  for (const auto& x : s.train.samples) train_patients.insert(x.patient_id);
  for (const auto& x : s.test.samples) CHECK(!train_patients.contains(x.patient_id));
}
