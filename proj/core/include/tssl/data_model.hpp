// SPDX-License-Identifier: Apache-2.0
//
// Core domain types shared by every stage of the pipeline: volumes, scan
// provenance, cohort manifests, gap-constrained sequences and downstream
// task datasets.

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tssl {

/// Thrown when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on malformed or missing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape3 {
  int depth = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t voxels() const {
    return static_cast<std::size_t>(depth) * height * width;
  }
  [[nodiscard]] bool valid() const { return depth > 0 && height > 0 && width > 0; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

/// Full-scale working resolution (depth first).
inline constexpr Shape3 kFullScaleShape{150, 192, 192};

/// Single-channel 3D scalar grid stored depth-major (d, h, w).
class Volume {
 public:
  Volume() = default;
  /// Zero-filled volume.
  explicit Volume(Shape3 shape);
  /// Takes ownership of `data`; throws ValidationError on size mismatch or
  /// non-finite intensities.
  Volume(Shape3 shape, std::vector<float> data);

  [[nodiscard]] const Shape3& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::span<const float> data() const { return data_; }
  [[nodiscard]] std::span<float> data() { return data_; }

  [[nodiscard]] std::size_t index(int d, int h, int w) const {
    return (static_cast<std::size_t>(d) * shape_.height + h) * shape_.width + w;
  }
  [[nodiscard]] float at(int d, int h, int w) const { return data_[index(d, h, w)]; }
  float& at(int d, int h, int w) { return data_[index(d, h, w)]; }

  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Shape3 shape_{};
  std::vector<float> data_;
};

enum class Label { CN, MCI, AD, Unlabeled };
enum class Split { Train, Val, Test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

using Date = std::chrono::year_month_day;

/// Parses a strict ISO-8601 calendar date (YYYY-MM-DD).
Date parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);

/// Interval in fractional years, computed as days / 365.25.
double years_between(const Date& earlier, const Date& later);

struct ScanRecord {
  std::string patient_id;
  std::string scan_id;
  Date acquisition_date{};
  Label label = Label::Unlabeled;
  std::filesystem::path volume_path;
  std::string dataset_id;

  friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

/// Cohort-level collection of scans plus a patient-level split assignment.
class Manifest {
 public:
  Manifest() = default;

  /// Throws ValidationError if (patient_id, scan_id) is already present.
  void add(ScanRecord record);
  void assign(const std::string& patient_id, Split split);

  [[nodiscard]] const std::vector<ScanRecord>& records() const { return records_; }
  [[nodiscard]] const std::map<std::string, Split>& split_assignment() const { return splits_; }
  [[nodiscard]] std::optional<Split> split_of(const std::string& patient_id) const;

  /// Patient ids in sorted order.
  [[nodiscard]] std::vector<std::string> patients() const;
  /// Scans of one patient sorted by acquisition date (scan_id breaks ties).
  [[nodiscard]] std::vector<ScanRecord> scans_of(const std::string& patient_id) const;

  /// Every patient with records must carry exactly one split.
  void validate_splits() const;

  [[nodiscard]] bool empty() const { return records_.empty(); }

 private:
  std::vector<ScanRecord> records_;
  std::map<std::string, Split> splits_;
};

inline constexpr double kMinGapYears = 1.0;
inline constexpr double kMaxGapYears = 2.5;
inline constexpr int kMinSequenceLength = 2;
inline constexpr int kMaxSequenceLength = 4;

/// Chronologically ordered scans of one patient, 2 to 4 long, with every
/// consecutive gap inside the configured bounds.
class Sequence {
 public:
  /// Validates ordering, length and gap bounds (inclusive).
  static Sequence make(std::vector<ScanRecord> scans, double min_gap = kMinGapYears,
                       double max_gap = kMaxGapYears);

  [[nodiscard]] const std::string& patient_id() const { return patient_id_; }
  [[nodiscard]] const std::vector<ScanRecord>& scans() const { return scans_; }
  [[nodiscard]] const std::vector<double>& gaps_years() const { return gaps_; }
  [[nodiscard]] int length() const { return static_cast<int>(scans_.size()); }

  friend bool operator==(const Sequence&, const Sequence&) = default;

 private:
  Sequence() = default;
  std::string patient_id_;
  std::vector<ScanRecord> scans_;
  std::vector<double> gaps_;
};

enum class TaskKind { StableClassification, ConversionDetection, FutureConversion };
std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

/// One downstream input: 1 to 3 chronologically ordered scans and a class id.
struct TaskSample {
  std::string patient_id;
  std::vector<ScanRecord> scans;
  std::vector<double> gaps_years;
  int label = 0;
};

struct TaskDataset {
  TaskKind kind = TaskKind::StableClassification;
  int num_input_images = 1;
  std::vector<TaskSample> samples;
  std::vector<std::string> class_names;
  /// Set when a binary task lacks positives or negatives.
  bool degenerate = false;

  [[nodiscard]] int num_classes() const { return static_cast<int>(class_names.size()); }
  /// Throws ValidationError if any sample has the wrong input count or label.
  void validate() const;
};

}  // namespace tssl
