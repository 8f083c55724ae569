// SPDX-License-Identifier: Apache-2.0

#include "tssl/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace tssl {

std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.depth) + ", " + std::to_string(s.height) + ", " +
         std::to_string(s.width) + ")";
}

Volume::Volume(Shape3 shape) : shape_(shape), data_(shape.voxels(), 0.0f) {
  if (!shape.valid()) throw ValidationError("volume shape must be positive: " + to_string(shape));
}

Volume::Volume(Shape3 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (!shape.valid()) throw ValidationError("volume shape must be positive: " + to_string(shape));
  if (data_.size() != shape.voxels()) {
    throw ValidationError("volume data size " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape));
  }
  if (!all_finite()) throw ValidationError("volume contains non-finite intensities");
}

bool Volume::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::CN: return "CN";
    case Label::MCI: return "MCI";
    case Label::AD: return "AD";
    case Label::Unlabeled: return "UNLABELED";
  }
  return "UNLABELED";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "TRAIN";
    case Split::Val: return "VAL";
    case Split::Test: return "TEST";
  }
  return "TRAIN";
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::StableClassification: return "STABLE_CLASSIFICATION";
    case TaskKind::ConversionDetection: return "CONVERSION_DETECTION";
    case TaskKind::FutureConversion: return "FUTURE_CONVERSION";
  }
  return "STABLE_CLASSIFICATION";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "STABLE_CLASSIFICATION") return TaskKind::StableClassification;
  if (text == "CONVERSION_DETECTION") return TaskKind::ConversionDetection;
  if (text == "FUTURE_CONVERSION") return TaskKind::FutureConversion;
  throw ValidationError("unknown task kind '" + std::string(text) + "'");
}

Label parse_label(std::string_view text) {
  if (text == "CN") return Label::CN;
  if (text == "MCI") return Label::MCI;
  if (text == "AD") return Label::AD;
  if (text == "UNLABELED") return Label::Unlabeled;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "TRAIN") return Split::Train;
  if (text == "VAL") return Split::Val;
  if (text == "TEST") return Split::Test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

Date parse_iso_date(std::string_view text) {
  auto fail = [&]() -> Date {
    throw ValidationError("unparseable ISO-8601 date '" + std::string(text) + "'");
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return fail();
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  const char* base = text.data();
  auto parse = [&](const char* first, const char* last, auto& out) {
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
  };
  if (!parse(base, base + 4, y) || !parse(base + 5, base + 7, m) || !parse(base + 8, base + 10, d)) {
    return fail();
  }
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return fail();
  return date;
}

std::string format_iso_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

double years_between(const Date& earlier, const Date& later) {
  const auto days = (std::chrono::sys_days{later} - std::chrono::sys_days{earlier}).count();
  return static_cast<double>(days) / 365.25;
}

void Manifest::add(ScanRecord record) {
  const bool duplicate = std::any_of(records_.begin(), records_.end(), [&](const ScanRecord& r) {
    return r.patient_id == record.patient_id && r.scan_id == record.scan_id;
  });
  if (duplicate) {
    throw ValidationError("duplicate scan (" + record.patient_id + ", " + record.scan_id + ")");
  }
  records_.push_back(std::move(record));
}

void Manifest::assign(const std::string& patient_id, Split split) {
  auto [it, inserted] = splits_.emplace(patient_id, split);
  if (!inserted && it->second != split) {
    throw ValidationError("patient " + patient_id + " assigned to more than one split");
  }
}

std::optional<Split> Manifest::split_of(const std::string& patient_id) const {
  auto it = splits_.find(patient_id);
  if (it == splits_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Manifest::patients() const {
  std::set<std::string> ids;
  for (const auto& r : records_) ids.insert(r.patient_id);
  return {ids.begin(), ids.end()};
}

std::vector<ScanRecord> Manifest::scans_of(const std::string& patient_id) const {
  std::vector<ScanRecord> out;
  for (const auto& r : records_) {
    if (r.patient_id == patient_id) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const ScanRecord& a, const ScanRecord& b) {
    if (a.acquisition_date != b.acquisition_date) return a.acquisition_date < b.acquisition_date;
    return a.scan_id < b.scan_id;
  });
  return out;
}

void Manifest::validate_splits() const {
  for (const auto& id : patients()) {
    if (!splits_.contains(id)) throw ValidationError("patient " + id + " has no split assignment");
  }
}

Sequence Sequence::make(std::vector<ScanRecord> scans, double min_gap, double max_gap) {
  const int n = static_cast<int>(scans.size());
  if (n < kMinSequenceLength || n > kMaxSequenceLength) {
    throw ValidationError("sequence length must be in [2, 4], got " + std::to_string(n));
  }
  Sequence seq;
  seq.patient_id_ = scans.front().patient_id;
  for (int i = 1; i < n; ++i) {
    if (scans[i].patient_id != seq.patient_id_) {
      throw ValidationError("sequence mixes patients");
    }
    if (!(scans[i - 1].acquisition_date < scans[i].acquisition_date)) {
      throw ValidationError("sequence scans must be strictly increasing in date");
    }
    const double gap = years_between(scans[i - 1].acquisition_date, scans[i].acquisition_date);
    if (gap < min_gap || gap > max_gap) {
      throw ValidationError("sequence gap " + std::to_string(gap) + " outside [" +
                            std::to_string(min_gap) + ", " + std::to_string(max_gap) + "]");
    }
    seq.gaps_.push_back(gap);
  }
  seq.scans_ = std::move(scans);
  return seq;
}

void TaskDataset::validate() const {
  if (num_input_images < 1 || num_input_images > 3) {
    throw ValidationError("task num_input_images must be in [1, 3]");
  }
  for (const auto& s : samples) {
    if (static_cast<int>(s.scans.size()) != num_input_images) {
      throw ValidationError("task sample for " + s.patient_id + " has " +
                            std::to_string(s.scans.size()) + " inputs, expected " +
                            std::to_string(num_input_images));
    }
    if (static_cast<int>(s.gaps_years.size()) != num_input_images - 1) {
      throw ValidationError("task sample gap count mismatch for " + s.patient_id);
    }
    if (s.label < 0 || s.label >= num_classes()) {
      throw ValidationError("task sample label out of range for " + s.patient_id);
    }
  }
}

}  // namespace tssl
