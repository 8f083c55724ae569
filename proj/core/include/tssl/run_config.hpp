// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. One YAML file drives synthesis, training and
// evaluation; keys are addressed by dotted paths (`finetune.lr_head`) both in
// the file and in `key=value` overrides.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tssl/augment.hpp"
#include "tssl/data_model.hpp"
#include "tssl/nets.hpp"
#include "tssl/objectives.hpp"
#include "tssl/optim.hpp"
#include "tssl/synth.hpp"

namespace tssl {

struct PretrainSettings {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-4;
  friend bool operator==(const PretrainSettings&, const PretrainSettings&) = default;
};

struct FinetuneSettings {
  int epochs = 50;
  int batch_size = 8;
  double lr_encoder = 1e-5;
  double lr_head = 1e-4;
  /// Used for every parameter when training from scratch.
  double lr_supervised = 1e-4;
  friend bool operator==(const FinetuneSettings&, const FinetuneSettings&) = default;
};

struct LossSettings {
  double temperature = 0.5;
  NegativeSet negatives = NegativeSet::BothViews;
  double contrastive_weight = 1.0;
  double classification_weight = 1.0;
  double probability_eps = kProbabilityEps;
  friend bool operator==(const LossSettings&, const LossSettings&) = default;
};

struct DataSettings {
  std::filesystem::path manifest;
  std::filesystem::path splits;
  double min_gap_years = kMinGapYears;
  double max_gap_years = kMaxGapYears;
  int max_sequence_length = kMaxSequenceLength;
  friend bool operator==(const DataSettings&, const DataSettings&) = default;
};

struct TaskSettings {
  TaskKind kind = TaskKind::StableClassification;
  int num_images = 1;
  Label from = Label::MCI;
  Label to = Label::AD;
  friend bool operator==(const TaskSettings&, const TaskSettings&) = default;
};

struct TrialSettings {
  int num = 3;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  friend bool operator==(const TrialSettings&, const TrialSettings&) = default;
};

struct RunConfig {
  Method method = Method::TOP;
  std::uint64_t seed = 0;
  int workers = 1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  Shape3 resolution{32, 32, 32};
  EncoderConfig encoder;
  HeadConfig heads;
  PretrainSettings pretrain;
  FinetuneSettings finetune;
  AugmentParams augment;
  DownstreamAugmentParams downstream_augment;
  bool downstream_augment_enabled = true;
  NormMode normalization = NormMode::ZScore;
  LossSettings loss;
  DataSettings data;
  std::filesystem::path checkpoint_dir;
  TaskSettings task;
  TrialSettings trials;
  PhantomSpec synth;
  /// Empty: `<run dir>/cohort`.
  std::filesystem::path synth_out;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Encoder config with the working resolution applied.
  [[nodiscard]] EncoderConfig encoder_config() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies `key=value` overrides onto the file's contents (overrides win).
/// Unknown keys and unparsable values throw ConfigError naming the key.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
RunConfig parse_run_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// Fully resolved config as YAML; parse_run_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& config);
/// Every dotted key with its resolved value.
std::map<std::string, std::string> flatten(const RunConfig& config);
/// 16 hex digits of FNV-1a over to_yaml(config).
std::string config_hash(const RunConfig& config);

}  // namespace tssl
