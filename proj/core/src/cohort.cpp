// SPDX-License-Identifier: Apache-2.0

#include "tssl/cohort.hpp"

#include <algorithm>
#include <random>

#include "json.hpp"

namespace tssl {

namespace {

const std::vector<Sequence> kNoSequences;

int length_slot(int n) {
  if (n < kMinSequenceLength || n > kMaxSequenceLength) {
    throw ValidationError("sequence length must be in [2, 4], got " + std::to_string(n));
  }
  return n - kMinSequenceLength;
}

// Depth-first growth of gap-valid chains starting from each scan.
void grow_chains(const std::vector<ScanRecord>& scans, std::vector<int>& chain, double min_gap,
                 double max_gap, int max_len, SequencePool& pool) {
  if (static_cast<int>(chain.size()) >= kMinSequenceLength) {
    std::vector<ScanRecord> members;
    for (int idx : chain) members.push_back(scans[idx]);
    pool.add(Sequence::make(std::move(members), min_gap, max_gap));
  }
  if (static_cast<int>(chain.size()) == max_len) return;
  const ScanRecord& last = scans[chain.back()];
  for (int next = chain.back() + 1; next < static_cast<int>(scans.size()); ++next) {
    if (!(last.acquisition_date < scans[next].acquisition_date)) continue;
    const double gap = years_between(last.acquisition_date, scans[next].acquisition_date);
    if (gap > max_gap) break;
    if (gap < min_gap) continue;
    chain.push_back(next);
    grow_chains(scans, chain, min_gap, max_gap, max_len, pool);
    chain.pop_back();
  }
}

}  // namespace

void SequencePool::add(Sequence seq) {
  const int slot = length_slot(seq.length());
  by_patient_[seq.patient_id()][slot].push_back(std::move(seq));
}

const std::vector<Sequence>& SequencePool::sequences_of(const std::string& patient_id, int n) const {
  auto it = by_patient_.find(patient_id);
  if (it == by_patient_.end()) return kNoSequences;
  return it->second[length_slot(n)];
}

std::size_t SequencePool::count(int n) const {
  const int slot = length_slot(n);
  std::size_t total = 0;
  for (const auto& [_, lists] : by_patient_) total += lists[slot].size();
  return total;
}

std::size_t SequencePool::patients_with(int n) const {
  const int slot = length_slot(n);
  return static_cast<std::size_t>(std::count_if(by_patient_.begin(), by_patient_.end(),
                                                [&](const auto& kv) { return !kv.second[slot].empty(); }));
}

std::vector<int> SequencePool::available_lengths() const {
  std::vector<int> out;
  for (int n = kMinSequenceLength; n <= kMaxSequenceLength; ++n) {
    if (patients_with(n) > 0) out.push_back(n);
  }
  return out;
}

std::vector<Sequence> SequencePool::all(int n) const {
  const int slot = length_slot(n);
  std::vector<Sequence> out;
  for (const auto& [_, lists] : by_patient_) out.insert(out.end(), lists[slot].begin(), lists[slot].end());
  return out;
}

std::string ExtractionReport::to_json() const {
  nlohmann::json j = {
      {"split", to_string(split)},
      {"patients_considered", patients_considered},
      {"patients_single_scan", patients_single_scan},
      {"patients_without_sequences", patients_without_sequences},
      {"sequences_by_length", {{"2", sequences_by_length[0]}, {"3", sequences_by_length[1]}, {"4", sequences_by_length[2]}}},
      {"patients_by_length", {{"2", patients_by_length[0]}, {"3", patients_by_length[1]}, {"4", patients_by_length[2]}}},
      {"notes", notes},
  };
  return j.dump(2);
}

Extraction extract_sequences(const Manifest& manifest, Split split, double min_gap, double max_gap,
                             int max_len) {
  if (!(min_gap < max_gap)) throw ValidationError("extract_sequences: min_gap must be < max_gap");
  length_slot(max_len);

  Extraction out{SequencePool(split), ExtractionReport{}};
  out.report.split = split;
  for (const auto& patient : manifest.patients()) {
    const auto assigned = manifest.split_of(patient);
    if (!assigned) {
      out.report.notes.push_back("patient " + patient + " has no split; skipped");
      continue;
    }
    if (*assigned != split) continue;
    ++out.report.patients_considered;
    const auto scans = manifest.scans_of(patient);
    if (scans.size() < 2) {
      ++out.report.patients_single_scan;
      continue;
    }
    const std::size_t before = out.pool.num_patients();
    std::vector<int> chain;
    for (int start = 0; start < static_cast<int>(scans.size()); ++start) {
      chain.assign(1, start);
      grow_chains(scans, chain, min_gap, max_gap, max_len, out.pool);
    }
    if (out.pool.num_patients() == before) ++out.report.patients_without_sequences;
  }
  for (int n = kMinSequenceLength; n <= kMaxSequenceLength; ++n) {
    out.report.sequences_by_length[n - 2] = out.pool.count(n);
    out.report.patients_by_length[n - 2] = out.pool.patients_with(n);
  }
  return out;
}

int class_index(Label label) {
  switch (label) {
    case Label::CN: return 0;
    case Label::MCI: return 1;
    case Label::AD: return 2;
    case Label::Unlabeled: break;
  }
  throw ValidationError("unlabeled scan has no class index");
}

namespace {

TaskSample prefix_sample(const Sequence& seq, int k, int label) {
  TaskSample s;
  s.patient_id = seq.patient_id();
  s.scans.assign(seq.scans().begin(), seq.scans().begin() + k);
  s.gaps_years.assign(seq.gaps_years().begin(), seq.gaps_years().begin() + (k - 1));
  s.label = label;
  return s;
}

TaskDataset empty_task(TaskKind kind, int k, std::vector<std::string> classes) {
  TaskDataset t;
  t.kind = kind;
  t.num_input_images = k;
  t.class_names = std::move(classes);
  return t;
}

}  // namespace

ClassificationSets build_classification_sets(const SequencePool& pool) {
  ClassificationSets sets{empty_task(TaskKind::StableClassification, 1, kStableClassNames),
                          empty_task(TaskKind::StableClassification, 2, kStableClassNames),
                          empty_task(TaskKind::StableClassification, 3, kStableClassNames), 0, 0};
  if (!std::ranges::any_of(pool.available_lengths(), [](int n) { return n == 3; })) return sets;
  for (const auto& seq : pool.all(3)) {
    const Label first = seq.scans().front().label;
    if (first == Label::Unlabeled) {
      ++sets.excluded_unlabeled;
      continue;
    }
    const bool constant = std::ranges::all_of(seq.scans(), [&](const ScanRecord& r) { return r.label == first; });
    if (!constant) {
      ++sets.excluded_mixed_label;
      continue;
    }
    const int label = class_index(first);
    sets.triplets.samples.push_back(prefix_sample(seq, 3, label));
    sets.pairs.samples.push_back(prefix_sample(seq, 2, label));
    sets.singles.samples.push_back(prefix_sample(seq, 1, label));
  }
  return sets;
}

ConversionSets build_conversion_sets(const SequencePool& pool, Label from, Label to) {
  if (from == to) throw ValidationError("build_conversion_sets: from and to labels must differ");
  if (from == Label::Unlabeled || to == Label::Unlabeled) {
    throw ValidationError("build_conversion_sets: labels must be diagnoses");
  }
  const std::string stable = std::string(to_string(from)) + "-" + std::string(to_string(from));
  const std::string converted = std::string(to_string(from)) + "-" + std::string(to_string(to));
  ConversionSets sets{empty_task(TaskKind::ConversionDetection, 2, {stable, converted}),
                      empty_task(TaskKind::FutureConversion, 1, {stable, converted}), 0};
  for (const auto& seq : pool.all(2)) {
    const Label a = seq.scans()[0].label;
    const Label b = seq.scans()[1].label;
    int label = -1;
    if (a == from && b == to) label = 1;
    if (a == from && b == from) label = 0;
    if (label < 0) {
      ++sets.excluded;
      continue;
    }
    sets.detection.samples.push_back(prefix_sample(seq, 2, label));
    sets.prediction.samples.push_back(prefix_sample(seq, 1, label));
  }
  const auto positives = std::ranges::count_if(sets.detection.samples, [](const TaskSample& s) { return s.label == 1; });
  const auto negatives = static_cast<std::ptrdiff_t>(sets.detection.samples.size()) - positives;
  const bool degenerate = positives == 0 || negatives == 0;
  sets.detection.degenerate = degenerate;
  sets.prediction.degenerate = degenerate;
  return sets;
}

std::vector<Sequence> sample_epoch(const SequencePool& pool, std::optional<int> n, std::uint64_t seed) {
  if (n) length_slot(*n);
  std::mt19937_64 rng(seed);
  std::vector<Sequence> out;
  std::vector<const Sequence*> eligible;
  for (const auto& [patient, lists] : pool.by_patient()) {
    eligible.clear();
    for (int len = kMinSequenceLength; len <= kMaxSequenceLength; ++len) {
      if (n && *n != len) continue;
      for (const auto& s : lists[len - 2]) eligible.push_back(&s);
    }
    if (eligible.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    out.push_back(*eligible[pick(rng)]);
  }
  return out;
}

std::vector<TaskSample> sample_task_epoch(const TaskDataset& task, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < task.samples.size(); ++i) by_patient[task.samples[i].patient_id].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<TaskSample> out;
  out.reserve(by_patient.size());
  for (const auto& [_, idx] : by_patient) {
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    out.push_back(task.samples[idx[pick(rng)]]);
  }
  return out;
}

}  // namespace tssl
