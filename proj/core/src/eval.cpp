// SPDX-License-Identifier: Apache-2.0

#include "tssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "tssl/trainer.hpp"

namespace tssl {

double auc_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: score and label counts differ");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("auc: non-finite score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc undefined: labels contain a single class");

  // Rank sum of the positives with mid-ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j;
  }
  const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_macro_ovr(const std::vector<std::vector<double>>& class_scores, std::span<const int> labels) {
  if (class_scores.size() != labels.size() || class_scores.empty()) {
    throw ValidationError("auc: score and label counts differ");
  }
  const std::size_t c = class_scores.front().size();
  for (const auto& row : class_scores)
    if (row.size() != c) throw ValidationError("auc: ragged class score rows");
  std::vector<std::size_t> counts(c, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) throw ValidationError("auc: label out of range");
    ++counts[l];
  }
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; });
  if (present < 2) throw MetricError("auc undefined: fewer than two classes present");
  double total = 0.0;
  int used = 0;
  std::vector<double> scores(labels.size());
  std::vector<int> binary(labels.size());
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      std::cerr << "warning: class " << k << " absent from labels; skipped in macro AUC\n";
      continue;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = class_scores[i][k];
      binary[i] = labels[i] == static_cast<int>(k) ? 1 : 0;
    }
    total += auc_binary(scores, binary);
    ++used;
  }
  return total / used;
}

std::vector<double> TrialReport::aucs() const {
  std::vector<double> out;
  for (const auto& t : trials)
    if (t.completed) out.push_back(t.auc);
  return out;
}

TrialReport aggregate_trials(std::string task_id, std::string method, int num_images, std::vector<TrialOutcome> trials) {
  if (trials.empty()) throw ValidationError("a trial report needs at least one trial");
  TrialReport r;
  r.task_id = std::move(task_id);
  r.method = std::move(method);
  r.num_images = num_images;
  r.trials = std::move(trials);
  const auto aucs = r.aucs();
  r.completed = static_cast<int>(aucs.size());
  r.partial = r.completed < r.num_trials();
  if (!aucs.empty()) {
    r.mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    double ss = 0.0;
    for (double a : aucs) ss += (a - r.mean) * (a - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(aucs.size()));
  }
  return r;
}

std::string TrialReport::to_json() const {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["method"] = method;
  j["num_images"] = num_images;
  j["num_trials"] = num_trials();
  j["completed"] = completed;
  j["partial"] = partial;
  j["mean"] = mean;
  j["std"] = stddev;
  j["aucs"] = aucs();
  j["trials"] = nlohmann::json::array();
  for (const auto& t : trials) {
    nlohmann::json e{{"seed", t.seed}, {"completed", t.completed}};
    e["auc"] = t.completed ? nlohmann::json(t.auc) : nlohmann::json(nullptr);
    if (!t.error.empty()) e["error"] = t.error;
    j["trials"].push_back(e);
  }
  return j.dump(2);
}

std::string TrialReport::to_table() const {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-36s %-11s %6s  %-15s %s\n", "Task", "Method", "Scans", "AUC", "Trials");
  out += line;
  char auc[48];
  if (completed > 0) {
    std::snprintf(auc, sizeof(auc), "%.3f +/- %.3f", mean, stddev);
  } else {
    std::snprintf(auc, sizeof(auc), "n/a");
  }
  std::snprintf(line, sizeof(line), "%-36s %-11s %6d  %-15s %d/%d%s\n", task_id.c_str(), method.c_str(), num_images,
                auc, completed, num_trials(), partial ? " (partial)" : "");
  out += line;
  return out;
}

TrialReport run_trials(const RunConfig& config, const TaskSplits& task, VolumeStore& volumes, const NormStats& norm,
                       int num_trials, const Network* pretrained) {
  if (num_trials < 1) throw ValidationError("num_trials must be >= 1");
  if (static_cast<int>(config.trials.seeds.size()) < num_trials) {
    throw ValidationError("trials.seeds lists fewer seeds than the requested trial count");
  }
  std::vector<TrialOutcome> outcomes;
  for (int i = 0; i < num_trials; ++i) {
    TrialOutcome o;
    o.seed = config.trials.seeds[i];
    try {
      RunConfig cfg = config;
      cfg.seed = o.seed;
      const TaskData data{&task.train, &task.val, &volumes, norm};
      TrainResult r = pretrained ? finetune(*pretrained, data, cfg) : train_supervised(data, cfg);
      o.auc = task_auc(r.model, task.test, volumes, norm, cfg.normalization);
      o.completed = true;
    } catch (const std::exception& e) {
      o.error = e.what();
      std::cerr << "warning: trial with seed " << o.seed << " failed: " << e.what() << '\n';
    }
    outcomes.push_back(std::move(o));
  }
  const std::string method = pretrained ? std::string(to_string(pretrained->method())) : "SUPERVISED";
  return aggregate_trials(task.task_id, method, task.train.num_input_images, std::move(outcomes));
}

}  // namespace tssl
