// SPDX-License-Identifier: Apache-2.0
//
// Sequence extraction, downstream task construction and per-epoch sampling.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tssl/data_model.hpp"

namespace tssl {

/// Gap-constrained sequences of one split, grouped by patient and length.
class SequencePool {
 public:
  using ByLength = std::array<std::vector<Sequence>, 3>;  // lengths 2, 3, 4

  explicit SequencePool(Split split) : split_(split) {}

  /// Throws ValidationError if `seq` is longer than 4 scans.
  void add(Sequence seq);

  [[nodiscard]] Split split() const { return split_; }
  [[nodiscard]] const std::map<std::string, ByLength>& by_patient() const { return by_patient_; }
  [[nodiscard]] const std::vector<Sequence>& sequences_of(const std::string& patient_id, int n) const;

  [[nodiscard]] std::size_t count(int n) const;
  [[nodiscard]] std::size_t patients_with(int n) const;
  [[nodiscard]] std::size_t num_patients() const { return by_patient_.size(); }
  [[nodiscard]] bool empty() const { return by_patient_.empty(); }
  /// Lengths that at least one patient provides, ascending.
  [[nodiscard]] std::vector<int> available_lengths() const;
  /// All sequences of length n across patients, in patient order.
  [[nodiscard]] std::vector<Sequence> all(int n) const;

 private:
  Split split_;
  std::map<std::string, ByLength> by_patient_;
};

struct ExtractionReport {
  Split split = Split::Train;
  std::size_t patients_considered = 0;
  std::size_t patients_single_scan = 0;
  std::size_t patients_without_sequences = 0;
  std::array<std::size_t, 3> sequences_by_length{};
  std::array<std::size_t, 3> patients_by_length{};
  std::vector<std::string> notes;

  [[nodiscard]] std::string to_json() const;
};

struct Extraction {
  SequencePool pool;
  ExtractionReport report;
};

/// Every chronological subset of each patient's scans of length 2..max_len
/// whose consecutive gaps lie in [min_gap, max_gap] (both inclusive).
/// Patients outside `split` or with fewer than two scans are skipped.
Extraction extract_sequences(const Manifest& manifest, Split split, double min_gap = kMinGapYears,
                             double max_gap = kMaxGapYears, int max_len = kMaxSequenceLength);

/// Label index used by the stable classification task.
int class_index(Label label);
inline const std::vector<std::string> kStableClassNames{"CN", "MCI", "AD"};

struct ClassificationSets {
  TaskDataset singles;
  TaskDataset pairs;
  TaskDataset triplets;
  std::size_t excluded_mixed_label = 0;
  std::size_t excluded_unlabeled = 0;
};

/// Label-constant triplets, plus the same samples truncated to their first
/// two scans and first scan. Sample k of every set comes from triplet k.
ClassificationSets build_classification_sets(const SequencePool& pool);

struct ConversionSets {
  TaskDataset detection;   // two images
  TaskDataset prediction;  // first image of each detection pair
  std::size_t excluded = 0;
};

/// Pairs starting at `from`: ending at `to` are positives, ending at `from`
/// negatives. A set lacking either class is flagged degenerate.
ConversionSets build_conversion_sets(const SequencePool& pool, Label from, Label to);

/// At most one sequence per patient, uniform over that patient's eligible
/// sequences. `n` restricts to one length; patients without one are skipped.
std::vector<Sequence> sample_epoch(const SequencePool& pool, std::optional<int> n, std::uint64_t seed);

/// At most one sample per patient, uniform over that patient's samples.
std::vector<TaskSample> sample_task_epoch(const TaskDataset& task, std::uint64_t seed);

}  // namespace tssl
