// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats.
//
// Volume: a JSON header (`*.json`) holding shape, voxel spacing, dtype tag and
// the name of a sibling raw file of little-endian float32 voxels in
// depth-major order.
//
// Manifest: CSV `patient_id,scan_id,acquisition_date,label,volume_path,dataset_id`.
// Split file: CSV `patient_id,split`.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "tssl/data_model.hpp"

namespace tssl {

inline constexpr const char* kVolumeDtypeTag = "float32-le";

struct VolumeHeader {
  Shape3 shape;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string dtype = kVolumeDtypeTag;
  std::string data_file;
};

/// Writes `<stem>.json` + `<stem>.raw`; `header_path` must end in `.json`.
void write_volume(const std::filesystem::path& header_path, const Volume& volume,
                  std::array<double, 3> spacing = {1.0, 1.0, 1.0});
Volume read_volume(const std::filesystem::path& header_path);
VolumeHeader read_volume_header(const std::filesystem::path& header_path);

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct ManifestLoad {
  Manifest manifest;
  std::vector<RejectedRow> rejected;
};

/// Relative volume paths are resolved against the manifest's directory.
/// Rows with unparseable dates or labels are rejected individually.
ManifestLoad read_manifest_csv(const std::filesystem::path& manifest_path);
void write_manifest_csv(const std::filesystem::path& path, const Manifest& manifest);

/// Adds the split assignments in `split_path` to `manifest`.
void read_split_csv(const std::filesystem::path& split_path, Manifest& manifest);
void write_split_csv(const std::filesystem::path& path, const Manifest& manifest);

/// Thread-safe lazy cache of volumes keyed by header path.
class VolumeStore {
 public:
  VolumeStore() = default;

  /// Registers an in-memory volume under `path` (no file access).
  void put(const std::filesystem::path& path, Volume volume);
  const Volume& get(const std::filesystem::path& path);
  const Volume& get(const ScanRecord& record) { return get(record.volume_path); }
  [[nodiscard]] std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Volume>> cache_;
};

}  // namespace tssl
