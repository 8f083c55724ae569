// SPDX-License-Identifier: Apache-2.0
//
// AUC metrics and repeated-trial aggregation.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tssl/nets.hpp"

namespace tssl {

/// Thrown when a metric is undefined for the given labels.
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mann-Whitney U over n+ * n- pairs; ties count one half.
double auc_binary(std::span<const double> scores, std::span<const int> labels);

/// Unweighted mean of one-vs-rest AUCs over the classes present in
/// `labels`. Absent classes are skipped with a warning.
double auc_macro_ovr(const std::vector<std::vector<double>>& class_scores, std::span<const int> labels);

struct TrialOutcome {
  std::uint64_t seed = 0;
  bool completed = false;
  double auc = 0.0;
  std::string error;
};

struct TrialReport {
  std::string task_id;
  std::string method;
  int num_images = 1;
  std::vector<TrialOutcome> trials;
  double mean = 0.0;
  /// Population standard deviation over completed trials.
  double stddev = 0.0;
  int completed = 0;
  /// Set when some trials failed and the aggregate covers fewer runs.
  bool partial = false;

  [[nodiscard]] int num_trials() const { return static_cast<int>(trials.size()); }
  [[nodiscard]] std::vector<double> aucs() const;
  [[nodiscard]] std::string to_json() const;
  [[nodiscard]] std::string to_table() const;
};

TrialReport aggregate_trials(std::string task_id, std::string method, int num_images, std::vector<TrialOutcome> trials);

struct RunConfig;
struct TaskSplits;
class VolumeStore;
struct NormStats;

/// Trains one model per seed (fine-tuning `pretrained` when given, else from
/// scratch) and scores each on the TEST split.
TrialReport run_trials(const RunConfig& config, const TaskSplits& task, VolumeStore& volumes, const NormStats& norm,
                       int num_trials, const Network* pretrained);

}  // namespace tssl
