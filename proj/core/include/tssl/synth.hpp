// SPDX-License-Identifier: Apache-2.0
//
// Synthetic longitudinal phantom cohort: a bright brain ellipsoid with a dark
// ventricle ellipsoid whose radii grow at a class-dependent rate. Disease
// stages never regress; converters switch label and growth rate at a
// sampled visit.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tssl/augment.hpp"
#include "tssl/data_model.hpp"
#include "tssl/io.hpp"

namespace tssl {

struct PhantomSpec {
  int num_patients = 120;
  int min_scans = 2;
  int max_scans = 4;
  Interval gap_years{1.0, 2.5};
  Shape3 resolution{32, 32, 32};
  /// Baseline class mix (CN, MCI, AD).
  std::array<double, 3> class_proportions{1.0 / 3, 1.0 / 3, 1.0 / 3};
  /// Ventricle radius at the first visit, as a fraction of the brain radius.
  std::array<double, 3> baseline_ventricle{0.22, 0.26, 0.30};
  /// Ventricle radius growth per year, as a fraction of the brain radius.
  std::array<double, 3> atrophy_rate{0.01, 0.025, 0.045};
  /// Years of class-rate growth before the first visit, drawn uniformly.
  double onset_years_max = 1.0;
  double conversion_probability = 0.2;
  double noise_std = 0.05;
  /// Relative jitter of brain radii and ventricle baseline (std-dev).
  double anatomy_jitter = 0.06;
  /// Fractions of patients assigned to TRAIN, VAL, TEST (stratified by class).
  std::array<double, 3> split_fractions{0.6, 0.15, 0.25};
  std::uint64_t seed = 7;
  std::string dataset_id = "PHANTOM";

  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct GeneratedCohort {
  Manifest manifest;
  std::vector<std::pair<std::filesystem::path, Volume>> volumes;
};

/// Volume paths are `<volume_root>/<patient>/<scan>.json`; nothing is written.
GeneratedCohort generate_cohort_in_memory(const PhantomSpec& spec, const std::filesystem::path& volume_root);

struct WrittenCohort {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path split_path;
};

/// Writes `manifest.csv`, `splits.csv` and `volumes/` under `out_dir`.
WrittenCohort generate_cohort(const PhantomSpec& spec, const std::filesystem::path& out_dir);

/// Dark voxels (< 0.5) not connected to the volume border.
std::size_t ventricle_voxel_count(const Volume& vol);

struct CohortFinding {
  std::string kind;  // missing-file, label-order, unlabeled, ventricle-order, split
  std::string patient_id;
  std::string scan_id;
  std::string message;
};

struct CohortReport {
  std::size_t patients = 0;
  std::size_t scans = 0;
  std::vector<CohortFinding> findings;
  [[nodiscard]] bool ok() const { return findings.empty(); }
  [[nodiscard]] std::string to_json() const;
};

/// Checks file presence, non-regressing labels, strictly growing ventricles
/// and split coverage.
CohortReport verify_cohort(const Manifest& manifest, VolumeStore& volumes);

}  // namespace tssl
