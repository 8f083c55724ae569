// SPDX-License-Identifier: Apache-2.0

#include "tssl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>

#include "json.hpp"
#include "tssl/cohort.hpp"

namespace tssl {

namespace fs = std::filesystem;

namespace {

Label next_stage(Label l) { return l == Label::CN ? Label::MCI : Label::AD; }

int stage_rank(Label l) {
  switch (l) {
    case Label::CN: return 0;
    case Label::MCI: return 1;
    case Label::AD: return 2;
    case Label::Unlabeled: break;
  }
  return -1;
}

// Partial-volume coverage of an axis-aligned ellipsoid centred at c.
double ellipsoid_coverage(double d, double h, double w, const std::array<double, 3>& c,
                          const std::array<double, 3>& r) {
  const double x = (d - c[0]) / r[0];
  const double y = (h - c[1]) / r[1];
  const double z = (w - c[2]) / r[2];
  const double rho = std::sqrt(x * x + y * y + z * z);
  const double r_min = std::min({r[0], r[1], r[2]});
  const double signed_dist = (rho - 1.0) * r_min;
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

struct PatientAnatomy {
  std::array<double, 3> center;
  std::array<double, 3> brain_radius;
  std::array<double, 3> ventricle_shape;  // per-axis multiplier on the ventricle fraction
  double gain;
};

Volume render(const PhantomSpec& spec, const PatientAnatomy& a, double ventricle_fraction, Rng& rng) {
  const Shape3 s = spec.resolution;
  std::array<double, 3> vr{};
  for (int i = 0; i < 3; ++i) vr[i] = a.brain_radius[i] * ventricle_fraction * a.ventricle_shape[i];
  std::vector<float> data(s.voxels());
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  std::size_t i = 0;
  for (int d = 0; d < s.depth; ++d)
    for (int h = 0; h < s.height; ++h)
      for (int w = 0; w < s.width; ++w, ++i) {
        const double brain = ellipsoid_coverage(d, h, w, a.center, a.brain_radius);
        const double vent = ellipsoid_coverage(d, h, w, a.center, vr);
        double v = a.gain * brain * (1.0 - vent);
        if (spec.noise_std > 0.0) v += noise(rng);
        data[i] = static_cast<float>(v);
      }
  return Volume(s, std::move(data));
}

std::string patient_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%04d", index);
  return buf;
}

}  // namespace

void PhantomSpec::validate() const {
  if (num_patients < 1) throw ValidationError("synth.num_patients must be >= 1");
  if (min_scans < 1 || max_scans < min_scans) throw ValidationError("synth scans-per-patient range is empty");
  if (!(gap_years.lo > 0.0 && gap_years.hi <= 5.0 && gap_years.lo <= gap_years.hi)) {
    throw ValidationError("synth.gap_years must lie within (0, 5]");
  }
  if (!(atrophy_rate[0] > 0.0 && atrophy_rate[0] < atrophy_rate[1] && atrophy_rate[1] < atrophy_rate[2])) {
    throw ValidationError("synth.atrophy_rate must be positive and strictly ordered CN < MCI < AD");
  }
  if (resolution.depth < 16 || resolution.height < 16 || resolution.width < 16) {
    throw ValidationError("synth.resolution " + to_string(resolution) + " is too small to contain the phantom");
  }
  if (conversion_probability < 0.0 || conversion_probability > 1.0) {
    throw ValidationError("synth.conversion_probability must be in [0, 1]");
  }
  if (noise_std < 0.0 || anatomy_jitter < 0.0 || onset_years_max < 0.0) {
    throw ValidationError("synth noise, jitter and onset must be non-negative");
  }
  const double total = std::accumulate(class_proportions.begin(), class_proportions.end(), 0.0);
  if (!(total > 0.0) || std::ranges::any_of(class_proportions, [](double p) { return p < 0.0; })) {
    throw ValidationError("synth.class_proportions must be non-negative with a positive sum");
  }
  const double split_total = std::accumulate(split_fractions.begin(), split_fractions.end(), 0.0);
  if (std::abs(split_total - 1.0) > 1e-6 || std::ranges::any_of(split_fractions, [](double p) { return p < 0.0; })) {
    throw ValidationError("synth.split_fractions must be non-negative and sum to 1");
  }
  // Largest ventricle must stay inside the brain.
  const double worst = baseline_ventricle[2] * (1.0 + 3.0 * anatomy_jitter) +
                       atrophy_rate[2] * (onset_years_max + (max_scans - 1) * gap_years.hi);
  if (worst >= 0.95) throw ValidationError("synth ventricle growth would exceed the brain; lower rates or visits");
}

GeneratedCohort generate_cohort_in_memory(const PhantomSpec& spec, const fs::path& volume_root) {
  spec.validate();
  GeneratedCohort cohort;
  const Shape3 s = spec.resolution;
  const std::chrono::sys_days origin{std::chrono::year{2005} / 1 / 1};
  const int min_days = static_cast<int>(std::ceil(spec.gap_years.lo * 365.25));
  const int max_days = static_cast<int>(std::floor(spec.gap_years.hi * 365.25));

  std::vector<Label> baseline_class(spec.num_patients);
  for (int p = 0; p < spec.num_patients; ++p) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(p), 0x5eedu};
    Rng rng(seq);
    std::discrete_distribution<int> cls(spec.class_proportions.begin(), spec.class_proportions.end());
    Label label = static_cast<Label>(cls(rng));
    baseline_class[p] = label;

    std::normal_distribution<double> jitter(0.0, spec.anatomy_jitter);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PatientAnatomy a{};
    const std::array<double, 3> base_radius{0.40 * s.depth, 0.42 * s.height, 0.38 * s.width};
    const std::array<double, 3> dims{static_cast<double>(s.depth), static_cast<double>(s.height),
                                     static_cast<double>(s.width)};
    for (int i = 0; i < 3; ++i) {
      a.brain_radius[i] = base_radius[i] * (1.0 + std::clamp(jitter(rng), -0.15, 0.15));
      a.center[i] = (dims[i] - 1.0) / 2.0 + std::clamp(jitter(rng), -0.15, 0.15) * 0.1 * dims[i];
    }
    a.ventricle_shape = {1.0, 0.8, 0.7};
    a.gain = 1.0 + std::clamp(jitter(rng), -0.15, 0.15) * 0.5;

    const int num_scans = std::uniform_int_distribution<int>(spec.min_scans, spec.max_scans)(rng);
    int convert_at = -1;
    if (label != Label::AD && num_scans >= 2 && unit(rng) < spec.conversion_probability) {
      convert_at = std::uniform_int_distribution<int>(1, num_scans - 1)(rng);
    }
    double fraction = spec.baseline_ventricle[class_index(label)] * (1.0 + std::clamp(jitter(rng), -0.25, 0.25)) +
                      spec.atrophy_rate[class_index(label)] * spec.onset_years_max * unit(rng);
    auto date = origin + std::chrono::days{std::uniform_int_distribution<int>(0, 5 * 365)(rng)};

    const std::string patient = patient_name(p);
    for (int v = 0; v < num_scans; ++v) {
      if (v > 0) {
        const int days = std::uniform_int_distribution<int>(min_days, max_days)(rng);
        date += std::chrono::days{days};
        // Growth over the interval uses the pre-visit rate; conversion is
        // diagnosed at the visit where it first shows.
        fraction += spec.atrophy_rate[class_index(label)] * days / 365.25;
        if (v == convert_at) label = next_stage(label);
      }
      char scan_buf[16];
      std::snprintf(scan_buf, sizeof(scan_buf), "S%02d", v);
      ScanRecord r;
      r.patient_id = patient;
      r.scan_id = scan_buf;
      r.acquisition_date = std::chrono::year_month_day{date};
      r.label = label;
      r.volume_path = (volume_root / patient / (r.scan_id + ".json")).lexically_normal();
      r.dataset_id = spec.dataset_id;
      cohort.volumes.emplace_back(r.volume_path, render(spec, a, fraction, rng));
      cohort.manifest.add(std::move(r));
    }
  }

  // Stratified split by baseline class.
  std::seed_seq split_seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x5b17u};
  Rng split_rng(split_seq);
  for (int c = 0; c < 3; ++c) {
    std::vector<int> members;
    for (int p = 0; p < spec.num_patients; ++p)
      if (static_cast<int>(baseline_class[p]) == c) members.push_back(p);
    std::shuffle(members.begin(), members.end(), split_rng);
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::lround(n * spec.split_fractions[0]));
    const auto n_val = static_cast<std::size_t>(std::lround(n * spec.split_fractions[1]));
    for (std::size_t i = 0; i < members.size(); ++i) {
      const Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
      cohort.manifest.assign(patient_name(members[i]), split);
    }
  }
  return cohort;
}

WrittenCohort generate_cohort(const PhantomSpec& spec, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  GeneratedCohort cohort = generate_cohort_in_memory(spec, out_dir / "volumes");
  for (const auto& [path, vol] : cohort.volumes) write_volume(path, vol);
  WrittenCohort out{cohort.manifest, out_dir / "manifest.csv", out_dir / "splits.csv"};
  write_manifest_csv(out.manifest_path, cohort.manifest);
  write_split_csv(out.split_path, cohort.manifest);
  return out;
}

std::size_t ventricle_voxel_count(const Volume& vol) {
  const Shape3 s = vol.shape();
  std::vector<unsigned char> outside(vol.size(), 0);
  std::deque<std::size_t> queue;
  auto dark = [&](std::size_t i) { return vol.data()[i] < 0.5f; };
  auto seed = [&](int d, int h, int w) {
    const std::size_t i = vol.index(d, h, w);
    if (!outside[i] && dark(i)) {
      outside[i] = 1;
      queue.push_back(i);
    }
  };
  for (int d = 0; d < s.depth; ++d)
    for (int h = 0; h < s.height; ++h)
      for (int w = 0; w < s.width; ++w)
        if (d == 0 || h == 0 || w == 0 || d == s.depth - 1 || h == s.height - 1 || w == s.width - 1) seed(d, h, w);
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int w = static_cast<int>(i % s.width);
    const int h = static_cast<int>((i / s.width) % s.height);
    const int d = static_cast<int>(i / (static_cast<std::size_t>(s.width) * s.height));
    if (d > 0) seed(d - 1, h, w);
    if (d + 1 < s.depth) seed(d + 1, h, w);
    if (h > 0) seed(d, h - 1, w);
    if (h + 1 < s.height) seed(d, h + 1, w);
    if (w > 0) seed(d, h, w - 1);
    if (w + 1 < s.width) seed(d, h, w + 1);
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < vol.size(); ++i)
    if (dark(i) && !outside[i]) ++count;
  return count;
}

std::string CohortReport::to_json() const {
  nlohmann::json j;
  j["patients"] = patients;
  j["scans"] = scans;
  j["ok"] = ok();
  j["findings"] = nlohmann::json::array();
  for (const auto& f : findings) {
    j["findings"].push_back({{"kind", f.kind}, {"patient_id", f.patient_id}, {"scan_id", f.scan_id}, {"message", f.message}});
  }
  return j.dump(2);
}

CohortReport verify_cohort(const Manifest& manifest, VolumeStore& volumes) {
  CohortReport report;
  report.scans = manifest.records().size();
  for (const auto& patient : manifest.patients()) {
    ++report.patients;
    if (!manifest.split_of(patient)) {
      report.findings.push_back({"split", patient, "", "patient has no split assignment"});
    }
    const auto scans = manifest.scans_of(patient);
    int prev_rank = -1;
    long prev_count = -1;
    for (const auto& r : scans) {
      const int rank = stage_rank(r.label);
      if (rank < 0) {
        report.findings.push_back({"unlabeled", patient, r.scan_id, "phantom scans must carry a diagnosis"});
      } else if (rank < prev_rank) {
        report.findings.push_back({"label-order", patient, r.scan_id,
                                   "diagnosis regresses to " + std::string(to_string(r.label))});
      }
      prev_rank = std::max(prev_rank, rank);
      try {
        const Volume& v = volumes.get(r);
        const long count = static_cast<long>(ventricle_voxel_count(v));
        if (prev_count >= 0 && count <= prev_count) {
          report.findings.push_back({"ventricle-order", patient, r.scan_id,
                                     "ventricle voxel count " + std::to_string(count) + " does not exceed " +
                                         std::to_string(prev_count)});
        }
        prev_count = count;
      } catch (const IoError& e) {
        report.findings.push_back({"missing-file", patient, r.scan_id, e.what()});
      }
    }
  }
  return report;
}

}  // namespace tssl
