// SPDX-License-Identifier: Apache-2.0
//
// Pre-training loops (order verification, order prediction, order prediction
// with contrastive learning), downstream fine-tuning and the from-scratch
// baseline.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tssl/augment.hpp"
#include "tssl/cohort.hpp"
#include "tssl/io.hpp"
#include "tssl/nets.hpp"
#include "tssl/run_config.hpp"

namespace tssl {

/// Mixes extra stream identifiers into a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Order-verification sample over scan indices: `slots[k]` is the scan shown
/// at position k, -1 for a zero-filled pad. Pads are always last.
struct TovSample {
  std::array<int, kTovLength> slots{};
  int label = 1;
  int length = 0;
};
/// Chronological (label 1) with probability 0.5, else a uniform
/// non-identity permutation (label 0).
TovSample make_tov_sample(int n, Rng& rng);

struct TopSample {
  std::vector<int> order;
  int class_index = 0;
};
/// Uniform over all n! orders.
TopSample make_top_sample(int n, Rng& rng);

struct EpochPlan {
  /// Sequence length shared by the epoch; unset for order verification.
  std::optional<int> n;
  std::vector<Sequence> sequences;
};
/// One sequence per patient, shuffled. Order prediction draws n uniformly
/// from the lengths the pool provides.
EpochPlan plan_pretrain_epoch(Method method, const SequencePool& pool, std::uint64_t seed, int epoch);
std::vector<TaskSample> plan_task_epoch(const TaskDataset& task, std::uint64_t seed, int epoch);

struct EpochRecord {
  std::string phase;
  int epoch = 0;
  std::optional<int> n;
  int samples = 0;
  int steps = 0;
  double loss = 0.0;
  double ntxent = 0.0;
  double perm_ce = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_metric;
  std::vector<std::string> warnings;

  [[nodiscard]] std::string to_json() const;
};

struct TrainOptions {
  /// Per-epoch `last` and improving `best` checkpoints go here when set.
  std::filesystem::path checkpoint_dir;
  /// JSON-lines training log.
  std::filesystem::path log_path;
  /// Stop after this many optimizer steps (< 0: run all epochs).
  long max_steps = -1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Network model;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_metric = 0.0;
  std::vector<double> step_losses;
  std::filesystem::path checkpoint;
};

struct PretrainData {
  const SequencePool* train = nullptr;
  /// Optional; pretext accuracy on it selects the returned model.
  const SequencePool* val = nullptr;
  VolumeStore* volumes = nullptr;
  NormStats norm;
};

struct TaskData {
  const TaskDataset* train = nullptr;
  /// Optional; AUC on it selects the returned model.
  const TaskDataset* val = nullptr;
  VolumeStore* volumes = nullptr;
  NormStats norm;
};

TrainResult pretrain_tov(const RunConfig& config, const PretrainData& data, const TrainOptions& options = {});
TrainResult pretrain_top(const RunConfig& config, const PretrainData& data, const TrainOptions& options = {});
TrainResult pretrain_topc(const RunConfig& config, const PretrainData& data, const TrainOptions& options = {});
/// Dispatches on config.method (must be a pretext method).
TrainResult pretrain(const RunConfig& config, const PretrainData& data, const TrainOptions& options = {});

/// k >= 2 reuses the pretext trunk, k = 1 keeps only the encoder.
TrainResult finetune(const Network& pretrained, const TaskData& data, const RunConfig& config,
                     const TrainOptions& options = {});
TrainResult train_supervised(const TaskData& data, const RunConfig& config, const TrainOptions& options = {});

/// Class probabilities per sample, evaluation mode, no augmentation.
std::vector<std::vector<double>> predict(Network& net, const TaskDataset& task, VolumeStore& volumes,
                                         const NormStats& norm, NormMode mode, int batch_size = 16);
/// Binary AUC for two classes, macro one-vs-rest otherwise.
double task_auc(Network& net, const TaskDataset& task, VolumeStore& volumes, const NormStats& norm, NormMode mode);

/// Fraction of (sequence, order) pairs whose order is predicted exactly,
/// over every sequence of length n and all n! orders.
double top_accuracy(Network& net, const SequencePool& pool, int n, VolumeStore& volumes, const NormStats& norm,
                    NormMode mode);
/// Balanced accuracy over chronological and all non-identity orders.
double tov_accuracy(Network& net, const SequencePool& pool, VolumeStore& volumes, const NormStats& norm,
                    NormMode mode);

/// Mean and std of every voxel of the TRAIN split's scans.
NormStats train_norm_stats(const Manifest& manifest, VolumeStore& volumes);

struct TaskSplits {
  std::string task_id;
  TaskDataset train;
  TaskDataset val;
  TaskDataset test;
};
/// Extracts sequences per split and builds the configured task.
TaskSplits make_task_splits(const Manifest& manifest, const RunConfig& config);

}  // namespace tssl
