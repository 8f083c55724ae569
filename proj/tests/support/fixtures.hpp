// SPDX-License-Identifier: Apache-2.0
//
// Small models, volumes and cohorts shared by the tests.

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tssl/augment.hpp"
#include "tssl/io.hpp"
#include "tssl/nets.hpp"
#include "tssl/run_config.hpp"
#include "tssl/synth.hpp"

namespace tssl::test {

inline EncoderConfig tiny_encoder(Shape3 shape = {12, 12, 12}) {
  EncoderConfig c;
  c.architecture = "resnet10";
  c.width_multiplier = 2.0 / 64.0;  // stage widths 2, 4, 8, 16
  c.stem_kernel = 3;
  c.input_shape = shape;
  return c;
}

inline HeadConfig tiny_heads() {
  HeadConfig h;
  h.hidden = {12, 8};
  h.projection_dim = 6;
  return h;
}

inline Volume random_volume(Shape3 s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<float> data(s.voxels());
  for (float& v : data) v = static_cast<float>(n(rng));
  return Volume(s, std::move(data));
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

inline Date day(int offset_days) {
  return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::year{2010} / 1 / 1} +
                                     std::chrono::days{offset_days}};
}

inline ScanRecord scan(const std::string& patient, const std::string& scan_id, int offset_days,
                       Label label = Label::CN) {
  ScanRecord r;
  r.patient_id = patient;
  r.scan_id = scan_id;
  r.acquisition_date = day(offset_days);
  r.label = label;
  r.volume_path = "/virtual/" + patient + "/" + scan_id + ".json";
  r.dataset_id = "TEST";
  return r;
}

/// Small phantom cohort registered in `store` under virtual paths.
inline Manifest phantom_cohort(VolumeStore& store, int patients, Shape3 resolution, std::uint64_t seed = 3) {
  PhantomSpec spec;
  spec.num_patients = patients;
  spec.resolution = resolution;
  spec.seed = seed;
  GeneratedCohort c = generate_cohort_in_memory(spec, "/virtual");
  for (auto& [path, vol] : c.volumes) store.put(path, std::move(vol));
  return c.manifest;
}

/// RunConfig sized for fast tests on 16^3 phantoms.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.resolution = {16, 16, 16};
  c.synth.resolution = {16, 16, 16};
  c.encoder = tiny_encoder();
  c.encoder.input_shape = EncoderConfig{}.input_shape;  // resolution is applied by encoder_config()
  c.heads = tiny_heads();
  c.pretrain.epochs = 2;
  c.pretrain.batch_size = 4;
  c.pretrain.learning_rate = 1e-3;
  c.finetune.epochs = 2;
  c.finetune.batch_size = 4;
  c.augment.translation_max_vox = 1.0;
  c.downstream_augment.translation_max_vox = 1.0;
  return c;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("tssl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;
  std::string worst_name;
  [[nodiscard]] double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

/// Central differences (step h) against the analytic gradient for every
/// element of `params`. Relative error is |a - n| / max(|a|, |n|, floor).
/// `grads` must zero, run forward and backward; `loss` must run forward only.
inline GradCheckResult gradcheck(const std::vector<Parameter*>& params, const std::function<double()>& loss,
                                 const std::function<void()>& grads, double h = 1e-4, double tol = 1e-3,
                                 double floor = 1e-7) {
  grads();
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  GradCheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real keep = p.value[i];
      p.value[i] = keep + h;
      const double up = loss();
      p.value[i] = keep - h;
      const double down = loss();
      p.value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.checked;
      if (rel <= tol) {
        ++r.passed;
      } else if (rel > r.worst) {
        r.worst = rel;
        r.worst_name = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace tssl::test
