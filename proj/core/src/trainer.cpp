// SPDX-License-Identifier: Apache-2.0

#include "tssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include "json.hpp"
#include "tssl/checkpoint.hpp"
#include "tssl/eval.hpp"
#include "tssl/objectives.hpp"
#include "tssl/optim.hpp"
#include "tssl/permutation.hpp"

namespace tssl {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kAugmentStream = 0xa1;
constexpr std::uint64_t kPlanStream = 0xb2;
constexpr std::uint64_t kHeadStream = 0xc3;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const Volume& fetch(VolumeStore& store, const ScanRecord& r, const Shape3& expected) {
  const Volume& v = store.get(r);
  if (v.shape() != expected) {
    throw ValidationError("volume " + r.volume_path.string() + " has shape " + to_string(v.shape()) +
                          ", working resolution is " + to_string(expected));
  }
  return v;
}

std::vector<Volume> raw_scans(VolumeStore& store, const std::vector<ScanRecord>& scans, const Shape3& shape) {
  std::vector<Volume> out;
  out.reserve(scans.size());
  for (const auto& r : scans) out.push_back(fetch(store, r, shape));
  return out;
}

// Volumes of one forward pass; a single shared zero volume serves every pad.
class BatchBuilder {
 public:
  explicit BatchBuilder(Shape3 shape) : shape_(shape) {}
  int add(Volume v) {
    volumes_.push_back(std::move(v));
    return static_cast<int>(volumes_.size()) - 1;
  }
  int zero_row() {
    if (zero_row_ < 0) zero_row_ = add(Volume(shape_));
    return zero_row_;
  }
  [[nodiscard]] int size() const { return static_cast<int>(volumes_.size()); }
  [[nodiscard]] Tensor stack() const {
    std::vector<const Volume*> ptrs;
    ptrs.reserve(volumes_.size());
    for (const auto& v : volumes_) ptrs.push_back(&v);
    return stack_volumes(ptrs);
  }

 private:
  Shape3 shape_;
  std::vector<Volume> volumes_;
  int zero_row_ = -1;
};

void scale(Tensor& t, Real s) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s;
}

int argmax(const Real* row, int n) { return static_cast<int>(std::max_element(row, row + n) - row); }

struct StepStats {
  double loss = 0.0;
  double ntxent = 0.0;
  double perm_ce = 0.0;
  int correct = 0;
  int count = 0;
  std::vector<std::string> warnings;
};

class LogSink {
 public:
  explicit LogSink(const fs::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open training log " + path.string());
  }
  void write(const EpochRecord& r) {
    if (out_.is_open()) out_ << r.to_json() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

template <typename Item>
struct LoopSpec {
  std::string phase;
  int epochs = 1;
  int batch_size = 1;
  std::function<std::pair<std::optional<int>, std::vector<Item>>(int)> plan;
  std::function<StepStats(std::span<const Item>, std::optional<int>, Rng&)> step;
  std::function<std::optional<double>()> validate;
  std::string metric_name;
};

template <typename Item>
TrainResult run_loop(Network& net, Optimizer& opt, const RunConfig& cfg, const LoopSpec<Item>& spec,
                     const TrainOptions& options, CheckpointMeta meta) {
  LogSink sink(options.log_path);
  std::vector<EpochRecord> log;
  std::optional<Network> best;
  bool best_has_metric = false;
  double best_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  std::vector<double> step_losses;
  fs::path best_path;
  meta.config_hash = config_hash(cfg);
  meta.metric_name = spec.metric_name;
  bool stop = false;

  for (int epoch = 1; epoch <= spec.epochs && !stop; ++epoch) {
    auto [n, items] = spec.plan(epoch);
    EpochRecord rec;
    rec.phase = spec.phase;
    rec.epoch = epoch;
    rec.n = n;
    if (items.empty()) {
      rec.warnings.push_back("empty epoch skipped");
      std::cerr << "warning: " << spec.phase << " epoch " << epoch << " has no samples; skipped\n";
      sink.write(rec);
      log.push_back(rec);
      continue;
    }
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), kAugmentStream));
    double loss_sum = 0.0, nt_sum = 0.0, ce_sum = 0.0;
    int correct = 0, count = 0;
    const auto bs = static_cast<std::size_t>(spec.batch_size);
    for (std::size_t b = 0; b < items.size(); b += bs) {
      const std::span<const Item> batch(items.data() + b, std::min(bs, items.size() - b));
      net.zero_grad();
      StepStats s = spec.step(batch, n, rng);
      opt.step();
      step_losses.push_back(s.loss);
      const auto w = static_cast<double>(batch.size());
      loss_sum += s.loss * w;
      nt_sum += s.ntxent * w;
      ce_sum += s.perm_ce * w;
      correct += s.correct;
      count += s.count;
      rec.samples += static_cast<int>(batch.size());
      ++rec.steps;
      for (auto& wmsg : s.warnings) {
        if (std::find(rec.warnings.begin(), rec.warnings.end(), wmsg) == rec.warnings.end()) {
          std::cerr << "warning: " << wmsg << '\n';
          rec.warnings.push_back(wmsg);
        }
      }
      if (options.max_steps >= 0 && static_cast<long>(step_losses.size()) >= options.max_steps) {
        stop = true;
        break;
      }
    }
    rec.loss = loss_sum / rec.samples;
    rec.ntxent = nt_sum / rec.samples;
    rec.perm_ce = ce_sum / rec.samples;
    rec.train_accuracy = count > 0 ? static_cast<double>(correct) / count : 0.0;
    if (spec.validate) rec.val_metric = spec.validate();

    // Without a validation metric the latest epoch wins.
    bool improved = false;
    if (rec.val_metric) {
      improved = !best_has_metric || *rec.val_metric > best_metric;
    } else {
      improved = !best_has_metric;
    }
    if (improved) {
      best = net;
      best_epoch = epoch;
      if (rec.val_metric) {
        best_metric = *rec.val_metric;
        best_has_metric = true;
      }
    }
    meta.epoch = epoch;
    meta.metric = rec.val_metric.value_or(rec.train_accuracy);
    if (!options.checkpoint_dir.empty()) {
      save_checkpoint(options.checkpoint_dir / "last", net, meta);
      if (improved) best_path = save_checkpoint(options.checkpoint_dir / "best", net, meta);
    }
    sink.write(rec);
    if (options.on_epoch) options.on_epoch(rec);
    log.push_back(std::move(rec));
  }
  if (!best) best = net;
  TrainResult result{std::move(*best), std::move(log), best_epoch,
                     best_has_metric ? best_metric : 0.0, std::move(step_losses), best_path};
  return result;
}

// ------------------------------------------------------------ pretext steps

StepStats tov_step(Network& net, const RunConfig& cfg, const PretrainData& data, std::span<const Sequence> batch,
                   Rng& rng) {
  BatchBuilder bb(cfg.resolution);
  std::vector<std::vector<int>> rows;
  std::vector<int> labels;
  for (const Sequence& seq : batch) {
    const auto raw = raw_scans(*data.volumes, seq.scans(), cfg.resolution);
    const auto aug = pretrain_augment(raw, cfg.augment, rng);
    const int base = bb.size();
    for (const auto& v : aug) bb.add(normalize(v, data.norm, cfg.normalization));
    const TovSample s = make_tov_sample(seq.length(), rng);
    std::vector<int> r;
    for (int slot : s.slots) r.push_back(slot >= 0 ? base + slot : bb.zero_row());
    rows.push_back(std::move(r));
    labels.push_back(s.label);
  }
  Tensor h = net.encoder().forward(bb.stack(), Mode::Train);
  Tensor logits = net.tov_head().forward(gather_rows(h, rows));
  const LossGrad lg = bce_with_logits(logits, labels, cfg.loss.probability_eps);
  Tensor dh = h.zeros_like();
  scatter_rows(net.tov_head().backward(lg.grad), rows, dh);
  net.encoder().backward(dh);

  StepStats s;
  s.loss = lg.loss;
  for (std::size_t i = 0; i < labels.size(); ++i) s.correct += (logits[i] > 0.0 ? 1 : 0) == labels[i];
  s.count = static_cast<int>(labels.size());
  return s;
}

StepStats top_step(Network& net, const RunConfig& cfg, const PretrainData& data, std::span<const Sequence> batch,
                   int n, Rng& rng) {
  BatchBuilder bb(cfg.resolution);
  std::vector<std::vector<int>> rows;
  std::vector<int> targets;
  for (const Sequence& seq : batch) {
    const auto raw = raw_scans(*data.volumes, seq.scans(), cfg.resolution);
    const auto aug = pretrain_augment(raw, cfg.augment, rng);
    const int base = bb.size();
    for (const auto& v : aug) bb.add(normalize(v, data.norm, cfg.normalization));
    const TopSample s = make_top_sample(n, rng);
    std::vector<int> r;
    for (int k : s.order) r.push_back(base + k);
    rows.push_back(std::move(r));
    targets.push_back(s.class_index);
  }
  ClassifierHead& head = net.top_head(n);
  Tensor h = net.encoder().forward(bb.stack(), Mode::Train);
  Tensor logits = head.forward(gather_rows(h, rows));
  const LossGrad ce = cross_entropy(logits, targets);
  Tensor dh = h.zeros_like();
  scatter_rows(head.backward(ce.grad), rows, dh);
  net.encoder().backward(dh);

  StepStats s;
  s.loss = ce.loss;
  s.perm_ce = ce.loss;
  const int classes = logits.dim(1);
  for (std::size_t i = 0; i < targets.size(); ++i) s.correct += argmax(logits.ptr() + i * classes, classes) == targets[i];
  s.count = static_cast<int>(targets.size());
  return s;
}

StepStats topc_step(Network& net, const RunConfig& cfg, const PretrainData& data, std::span<const Sequence> batch,
                    int n, Rng& rng) {
  BatchBuilder bb(cfg.resolution);
  std::vector<int> first_i, first_j;
  std::vector<std::vector<int>> perm_rows;
  std::vector<int> targets;
  for (const Sequence& seq : batch) {
    const auto raw = raw_scans(*data.volumes, seq.scans(), cfg.resolution);
    const TwoViews views = make_two_views(raw, cfg.augment, rng);
    const int base_i = bb.size();
    for (const auto& v : views.view_i) bb.add(normalize(v, data.norm, cfg.normalization));
    const int base_j = bb.size();
    for (const auto& v : views.view_j) bb.add(normalize(v, data.norm, cfg.normalization));
    first_i.push_back(base_i);
    first_j.push_back(base_j);
    // The permutation branch reuses view-i representations.
    const TopSample s = make_top_sample(n, rng);
    std::vector<int> r;
    for (int k : s.order) r.push_back(base_i + k);
    perm_rows.push_back(std::move(r));
    targets.push_back(s.class_index);
  }
  const int b = static_cast<int>(batch.size());
  Tensor h = net.encoder().forward(bb.stack(), Mode::Train);
  Tensor dh = h.zeros_like();

  ClassifierHead& head = net.top_head(n);
  Tensor logits = head.forward(gather_rows(h, perm_rows));
  LossGrad ce = cross_entropy(logits, targets);
  scale(ce.grad, cfg.loss.classification_weight);
  scatter_rows(head.backward(ce.grad), perm_rows, dh);

  StepStats s;
  s.perm_ce = ce.loss;
  if (b >= 2) {
    std::vector<std::vector<int>> proj_rows;
    for (int r : first_i) proj_rows.push_back({r});
    for (int r : first_j) proj_rows.push_back({r});
    ProjectionHead& proj = net.projection();
    const Tensor z = proj.forward(gather_rows(h, proj_rows));
    const int p = z.dim(1);
    ContrastiveBatch cb{Tensor({b, p}), Tensor({b, p}), cfg.loss.temperature};
    std::copy(z.ptr(), z.ptr() + static_cast<std::size_t>(b) * p, cb.z_i.ptr());
    std::copy(z.ptr() + static_cast<std::size_t>(b) * p, z.ptr() + z.size(), cb.z_j.ptr());
    const NtXentResult nt = ntxent_loss(cb, cfg.loss.negatives);
    Tensor dz = z.zeros_like();
    std::copy(nt.grad_i.ptr(), nt.grad_i.ptr() + nt.grad_i.size(), dz.ptr());
    std::copy(nt.grad_j.ptr(), nt.grad_j.ptr() + nt.grad_j.size(), dz.ptr() + nt.grad_i.size());
    scale(dz, cfg.loss.contrastive_weight);
    scatter_rows(proj.backward(dz), proj_rows, dh);
    s.ntxent = nt.loss;
    s.loss = topc_loss(nt.loss, ce.loss, cfg.loss.contrastive_weight, cfg.loss.classification_weight);
  } else {
    s.warnings.push_back("batch holds fewer than 2 sequences; contrastive term skipped");
    s.loss = cfg.loss.classification_weight * ce.loss;
  }
  net.encoder().backward(dh);

  const int classes = logits.dim(1);
  for (std::size_t i = 0; i < targets.size(); ++i) s.correct += argmax(logits.ptr() + i * classes, classes) == targets[i];
  s.count = static_cast<int>(targets.size());
  return s;
}

// --------------------------------------------------------- downstream steps

struct DownstreamBatch {
  Tensor x;
  std::vector<std::vector<int>> rows;
  Tensor gaps;
  std::vector<int> labels;
};

DownstreamBatch build_downstream_batch(const Network& net, std::span<const TaskSample> samples, VolumeStore& store,
                                       const NormStats& norm, NormMode mode, const Shape3& shape,
                                       const DownstreamAugmentParams* augment, Rng* rng) {
  const DownstreamInfo& info = net.downstream_info();
  BatchBuilder bb(shape);
  DownstreamBatch out;
  const int gw = info.gap_width;
  out.gaps = Tensor({static_cast<int>(samples.size()), std::max(gw, 1)});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TaskSample& s = samples[i];
    if (static_cast<int>(s.scans.size()) != info.num_images) {
      throw ValidationError("sample for patient " + s.patient_id + " has " + std::to_string(s.scans.size()) +
                            " scans, model expects " + std::to_string(info.num_images));
    }
    auto vols = raw_scans(store, s.scans, shape);
    if (augment) vols = downstream_augment_sequence(vols, *augment, *rng);
    const int base = bb.size();
    for (const auto& v : vols) bb.add(normalize(v, norm, mode));
    std::vector<int> r;
    for (int k = 0; k < info.feature_slots; ++k) r.push_back(k < info.num_images ? base + k : bb.zero_row());
    out.rows.push_back(std::move(r));
    if (gw > 0) {
      const auto g = gap_features(s.gaps_years, gw);
      std::copy(g.begin(), g.end(), out.gaps.ptr() + i * gw);
    }
    out.labels.push_back(s.label);
  }
  out.x = bb.stack();
  return out;
}

StepStats downstream_step(Network& net, const RunConfig& cfg, const TaskData& data, std::span<const TaskSample> batch,
                          Rng& rng) {
  const DownstreamAugmentParams* aug = cfg.downstream_augment_enabled ? &cfg.downstream_augment : nullptr;
  DownstreamBatch db =
      build_downstream_batch(net, batch, *data.volumes, data.norm, cfg.normalization, cfg.resolution, aug, &rng);
  ClassifierHead& head = net.downstream();
  Tensor h = net.encoder().forward(db.x, Mode::Train);
  Tensor logits = head.forward(gather_rows(h, db.rows), head.gap_width() > 0 ? &db.gaps : nullptr);
  const LossGrad ce = cross_entropy(logits, db.labels);
  Tensor dh = h.zeros_like();
  scatter_rows(head.backward(ce.grad), db.rows, dh);
  net.encoder().backward(dh);

  StepStats s;
  s.loss = ce.loss;
  const int classes = logits.dim(1);
  for (std::size_t i = 0; i < db.labels.size(); ++i) s.correct += argmax(logits.ptr() + i * classes, classes) == db.labels[i];
  s.count = static_cast<int>(db.labels.size());
  return s;
}

void require_pool(const PretrainData& data) {
  if (data.train == nullptr || data.train->empty()) throw ValidationError("pre-training needs a non-empty sequence pool");
  if (data.volumes == nullptr) throw ValidationError("pre-training needs a volume store");
}

std::optional<double> pretext_metric(Network& net, const RunConfig& cfg, const PretrainData& data) {
  if (data.val == nullptr || data.val->empty()) return std::nullopt;
  if (cfg.method == Method::TOV) return tov_accuracy(net, *data.val, *data.volumes, data.norm, cfg.normalization);
  double total = 0.0;
  int lengths = 0;
  for (int n : data.val->available_lengths()) {
    total += top_accuracy(net, *data.val, n, *data.volumes, data.norm, cfg.normalization);
    ++lengths;
  }
  if (lengths == 0) return std::nullopt;
  return total / lengths;
}

CheckpointMeta base_meta(const RunConfig& cfg, const NormStats& norm) {
  CheckpointMeta m;
  m.norm = norm;
  m.norm_mode = cfg.normalization;
  return m;
}

TrainResult run_pretrain(Method method, const RunConfig& cfg_in, const PretrainData& data,
                         const TrainOptions& options) {
  require_pool(data);
  RunConfig cfg = cfg_in;
  cfg.method = method;
  cfg.validate();
  if (method == Method::Supervised) throw ValidationError("supervised training has no pretext stage");
  Network net(method, cfg.encoder_config(), cfg.heads, cfg.seed);
  Optimizer opt(cfg.optimizer, {ParamGroup{net.parameters(), cfg.pretrain.learning_rate}});

  LoopSpec<Sequence> spec;
  spec.phase = "pretrain-" + std::string(to_string(method));
  spec.epochs = cfg.pretrain.epochs;
  spec.batch_size = cfg.pretrain.batch_size;
  spec.metric_name = method == Method::TOV ? "val_balanced_accuracy" : "val_permutation_accuracy";
  spec.plan = [&](int epoch) {
    EpochPlan p = plan_pretrain_epoch(method, *data.train, cfg.seed, epoch);
    return std::make_pair(p.n, std::move(p.sequences));
  };
  spec.step = [&](std::span<const Sequence> batch, std::optional<int> n, Rng& rng) {
    switch (method) {
      case Method::TOV: return tov_step(net, cfg, data, batch, rng);
      case Method::TOP: return top_step(net, cfg, data, batch, *n, rng);
      default: return topc_step(net, cfg, data, batch, *n, rng);
    }
  };
  spec.validate = [&]() { return pretext_metric(net, cfg, data); };
  return run_loop(net, opt, cfg, spec, options, base_meta(cfg, data.norm));
}

void require_task(const TaskData& data) {
  if (data.train == nullptr || data.volumes == nullptr) throw ValidationError("training needs a task dataset and volumes");
  const TaskDataset& t = *data.train;
  if (t.num_classes() <= 1) {
    throw ValidationError("refusing to train: task has " + std::to_string(t.num_classes()) + " class(es)");
  }
  if (t.degenerate) throw ValidationError("refusing to train: task lacks positives or negatives");
  if (t.samples.empty()) throw ValidationError("refusing to train: task has no samples");
  t.validate();
}

std::optional<double> downstream_metric(Network& net, const RunConfig& cfg, const TaskData& data) {
  if (data.val == nullptr || data.val->samples.empty()) return std::nullopt;
  std::vector<int> present(data.val->num_classes(), 0);
  for (const auto& s : data.val->samples) present[s.label] = 1;
  if (std::count(present.begin(), present.end(), 1) < 2) return std::nullopt;
  return task_auc(net, *data.val, *data.volumes, data.norm, cfg.normalization);
}

TrainResult run_downstream(Network& net, Optimizer& opt, const RunConfig& cfg, const TaskData& data,
                           const TrainOptions& options, const std::string& phase) {
  LoopSpec<TaskSample> spec;
  spec.phase = phase;
  spec.epochs = cfg.finetune.epochs;
  spec.batch_size = cfg.finetune.batch_size;
  spec.metric_name = "val_auc";
  spec.plan = [&](int epoch) {
    return std::make_pair(std::optional<int>{}, plan_task_epoch(*data.train, cfg.seed, epoch));
  };
  spec.step = [&](std::span<const TaskSample> batch, std::optional<int>, Rng& rng) {
    return downstream_step(net, cfg, data, batch, rng);
  };
  spec.validate = [&]() { return downstream_metric(net, cfg, data); };
  CheckpointMeta meta = base_meta(cfg, data.norm);
  meta.class_names = data.train->class_names;
  return run_loop(net, opt, cfg, spec, options, meta);
}

Tensor encode_scans(Network& net, const std::vector<ScanRecord>& scans, bool add_zero, VolumeStore& store,
                    const NormStats& norm, NormMode mode, const Shape3& shape) {
  const int total = static_cast<int>(scans.size()) + (add_zero ? 1 : 0);
  const int f = net.feature_dim();
  Tensor out({total, f});
  constexpr int kChunk = 32;
  for (int start = 0; start < total; start += kChunk) {
    const int end = std::min(total, start + kChunk);
    BatchBuilder bb(shape);
    for (int i = start; i < end; ++i) {
      if (i < static_cast<int>(scans.size())) {
        bb.add(normalize(fetch(store, scans[i], shape), norm, mode));
      } else {
        bb.zero_row();
      }
    }
    const Tensor h = net.encoder().forward(bb.stack(), Mode::Eval);
    std::copy(h.ptr(), h.ptr() + h.size(), out.ptr() + static_cast<std::size_t>(start) * f);
  }
  return out;
}

// Unique scans of `seqs` and, per sequence, their row indices.
std::vector<ScanRecord> unique_scans(const std::vector<Sequence>& seqs, std::vector<std::vector<int>>& index) {
  std::map<std::string, int> row_of;
  std::vector<ScanRecord> scans;
  for (const auto& s : seqs) {
    std::vector<int> idx;
    for (const auto& r : s.scans()) {
      const std::string key = r.patient_id + "\x1f" + r.scan_id;
      auto [it, inserted] = row_of.emplace(key, static_cast<int>(scans.size()));
      if (inserted) scans.push_back(r);
      idx.push_back(it->second);
    }
    index.push_back(std::move(idx));
  }
  return scans;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

TovSample make_tov_sample(int n, Rng& rng) {
  if (n < kMinSequenceLength || n > kTovLength) throw ValidationError("order verification takes 2 to 4 scans");
  TovSample s;
  s.length = n;
  std::vector<int> order;
  if (std::bernoulli_distribution(0.5)(rng)) {
    s.label = 1;
    order = index_to_permutation(n, 0);
  } else {
    s.label = 0;
    order = index_to_permutation(n, std::uniform_int_distribution<int>(1, factorial(n) - 1)(rng));
  }
  s.slots.fill(-1);
  for (int k = 0; k < n; ++k) s.slots[k] = order[k];
  return s;
}

TopSample make_top_sample(int n, Rng& rng) {
  if (n < kMinSequenceLength || n > kMaxSequenceLength) throw ValidationError("order prediction takes 2 to 4 scans");
  TopSample s;
  s.class_index = std::uniform_int_distribution<int>(0, factorial(n) - 1)(rng);
  s.order = index_to_permutation(n, s.class_index);
  return s;
}

EpochPlan plan_pretrain_epoch(Method method, const SequencePool& pool, std::uint64_t seed, int epoch) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), kPlanStream));
  EpochPlan plan;
  if (method == Method::TOV) {
    plan.sequences = sample_epoch(pool, std::nullopt, rng());
  } else {
    std::vector<int> lengths = pool.available_lengths();
    // An n whose pool is empty is redrawn from the remaining lengths.
    while (!lengths.empty() && plan.sequences.empty()) {
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, lengths.size() - 1)(rng);
      plan.n = lengths[pick];
      plan.sequences = sample_epoch(pool, plan.n, rng());
      lengths.erase(lengths.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  std::shuffle(plan.sequences.begin(), plan.sequences.end(), rng);
  return plan;
}

std::vector<TaskSample> plan_task_epoch(const TaskDataset& task, std::uint64_t seed, int epoch) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), kPlanStream));
  auto samples = sample_task_epoch(task, rng());
  std::shuffle(samples.begin(), samples.end(), rng);
  return samples;
}

std::string EpochRecord::to_json() const {
  nlohmann::json j;
  j["phase"] = phase;
  j["epoch"] = epoch;
  j["n"] = n ? nlohmann::json(*n) : nlohmann::json(nullptr);
  j["samples"] = samples;
  j["steps"] = steps;
  j["loss"] = loss;
  j["ntxent"] = ntxent;
  j["perm_ce"] = perm_ce;
  j["train_accuracy"] = train_accuracy;
  j["val_metric"] = val_metric ? nlohmann::json(*val_metric) : nlohmann::json(nullptr);
  j["warnings"] = warnings;
  return j.dump();
}

TrainResult pretrain_tov(const RunConfig& config, const PretrainData& data, const TrainOptions& options) {
  return run_pretrain(Method::TOV, config, data, options);
}

TrainResult pretrain_top(const RunConfig& config, const PretrainData& data, const TrainOptions& options) {
  return run_pretrain(Method::TOP, config, data, options);
}

TrainResult pretrain_topc(const RunConfig& config, const PretrainData& data, const TrainOptions& options) {
  return run_pretrain(Method::TOPC, config, data, options);
}

TrainResult pretrain(const RunConfig& config, const PretrainData& data, const TrainOptions& options) {
  switch (config.method) {
    case Method::TOV: return pretrain_tov(config, data, options);
    case Method::TOP: return pretrain_top(config, data, options);
    case Method::TOPC: return pretrain_topc(config, data, options);
    case Method::Supervised: break;
  }
  throw ValidationError("method SUPERVISED has no pretext stage");
}

TrainResult finetune(const Network& pretrained, const TaskData& data, const RunConfig& cfg, const TrainOptions& options) {
  require_task(data);
  cfg.validate();
  if (pretrained.method() == Method::Supervised) {
    throw ValidationError("fine-tuning needs a pre-trained (TOV, TOP or TOPC) checkpoint");
  }
  if (pretrained.encoder().config() != cfg.encoder_config()) {
    throw ValidationError("checkpoint encoder does not match the configured encoder and resolution");
  }
  Network net = pretrained;
  net.attach_downstream(data.train->num_input_images, data.train->num_classes(),
                        derive_seed(cfg.seed, 0, kHeadStream));
  net.drop_pretext_heads();
  std::vector<Parameter*> head;
  net.downstream().parameters(head);
  Optimizer opt(cfg.optimizer, {ParamGroup{net.encoder_parameters(), cfg.finetune.lr_encoder},
                                ParamGroup{head, cfg.finetune.lr_head}});
  return run_downstream(net, opt, cfg, data, options, "finetune-" + std::string(to_string(pretrained.method())));
}

TrainResult train_supervised(const TaskData& data, const RunConfig& cfg, const TrainOptions& options) {
  require_task(data);
  cfg.validate();
  Network net(Method::Supervised, cfg.encoder_config(), cfg.heads, cfg.seed);
  net.attach_downstream(data.train->num_input_images, data.train->num_classes(),
                        derive_seed(cfg.seed, 0, kHeadStream));
  Optimizer opt(cfg.optimizer, {ParamGroup{net.parameters(), cfg.finetune.lr_supervised}});
  return run_downstream(net, opt, cfg, data, options, "supervised");
}

std::vector<std::vector<double>> predict(Network& net, const TaskDataset& task, VolumeStore& volumes,
                                         const NormStats& norm, NormMode mode, int batch_size) {
  std::vector<std::vector<double>> out;
  const Shape3 shape = net.encoder().config().input_shape;
  ClassifierHead& head = net.downstream();
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t b = 0; b < task.samples.size(); b += bs) {
    const std::span<const TaskSample> batch(task.samples.data() + b, std::min(bs, task.samples.size() - b));
    DownstreamBatch db = build_downstream_batch(net, batch, volumes, norm, mode, shape, nullptr, nullptr);
    const Tensor h = net.encoder().forward(db.x, Mode::Eval);
    const Tensor logits = head.forward(gather_rows(h, db.rows), head.gap_width() > 0 ? &db.gaps : nullptr);
    const int c = logits.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.push_back(softmax(std::span<const Real>(logits.ptr() + i * c, static_cast<std::size_t>(c))));
    }
  }
  return out;
}

double task_auc(Network& net, const TaskDataset& task, VolumeStore& volumes, const NormStats& norm, NormMode mode) {
  const auto probs = predict(net, task, volumes, norm, mode);
  std::vector<int> labels;
  for (const auto& s : task.samples) labels.push_back(s.label);
  if (task.num_classes() == 2) {
    std::vector<double> scores;
    for (const auto& p : probs) scores.push_back(p[1]);
    return auc_binary(scores, labels);
  }
  return auc_macro_ovr(probs, labels);
}

double top_accuracy(Network& net, const SequencePool& pool, int n, VolumeStore& volumes, const NormStats& norm,
                    NormMode mode) {
  const std::vector<Sequence> seqs = pool.all(n);
  if (seqs.empty()) throw ValidationError("no sequences of length " + std::to_string(n) + " to evaluate");
  std::vector<std::vector<int>> index;
  const auto scans = unique_scans(seqs, index);
  const Tensor h = encode_scans(net, scans, false, volumes, norm, mode, net.encoder().config().input_shape);
  std::vector<std::vector<int>> rows;
  std::vector<int> targets;
  for (const auto& idx : index) {
    for (int c = 0; c < factorial(n); ++c) {
      std::vector<int> r;
      for (int k : index_to_permutation(n, c)) r.push_back(idx[k]);
      rows.push_back(std::move(r));
      targets.push_back(c);
    }
  }
  const Tensor logits = net.top_head(n).forward(gather_rows(h, rows));
  const int classes = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) correct += argmax(logits.ptr() + i * classes, classes) == targets[i];
  return static_cast<double>(correct) / static_cast<double>(targets.size());
}

double tov_accuracy(Network& net, const SequencePool& pool, VolumeStore& volumes, const NormStats& norm,
                    NormMode mode) {
  std::vector<Sequence> seqs;
  for (int n = kMinSequenceLength; n <= kMaxSequenceLength; ++n) {
    auto s = pool.all(n);
    seqs.insert(seqs.end(), s.begin(), s.end());
  }
  if (seqs.empty()) throw ValidationError("no sequences to evaluate");
  std::vector<std::vector<int>> index;
  const auto scans = unique_scans(seqs, index);
  const Tensor h = encode_scans(net, scans, true, volumes, norm, mode, net.encoder().config().input_shape);
  const int zero = static_cast<int>(scans.size());
  std::vector<std::vector<int>> rows;
  std::vector<int> labels;
  for (const auto& idx : index) {
    const int n = static_cast<int>(idx.size());
    for (int c = 0; c < factorial(n); ++c) {
      std::vector<int> r;
      for (int k : index_to_permutation(n, c)) r.push_back(idx[k]);
      while (static_cast<int>(r.size()) < kTovLength) r.push_back(zero);
      rows.push_back(std::move(r));
      labels.push_back(c == 0 ? 1 : 0);
    }
  }
  const Tensor logits = net.tov_head().forward(gather_rows(h, rows));
  double pos = 0, pos_n = 0, neg = 0, neg_n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool said_ordered = logits[i] > 0.0;
    if (labels[i] == 1) {
      pos += said_ordered;
      ++pos_n;
    } else {
      neg += !said_ordered;
      ++neg_n;
    }
  }
  return 0.5 * (pos / pos_n + neg / neg_n);
}

NormStats train_norm_stats(const Manifest& manifest, VolumeStore& volumes) {
  std::vector<const Volume*> ptrs;
  for (const auto& r : manifest.records()) {
    const auto split = manifest.split_of(r.patient_id);
    if (split && *split == Split::Train) ptrs.push_back(&volumes.get(r));
  }
  if (ptrs.empty()) throw ValidationError("no TRAIN-split scans to compute normalization statistics");
  return compute_norm_stats(ptrs);
}

TaskSplits make_task_splits(const Manifest& manifest, const RunConfig& cfg) {
  TaskSplits out;
  const TaskSettings& t = cfg.task;
  if (t.kind == TaskKind::StableClassification) {
    out.task_id = std::string(to_string(t.kind)) + " k=" + std::to_string(t.num_images);
  } else {
    out.task_id = std::string(to_string(t.kind)) + " " + std::string(to_string(t.from)) + "->" +
                  std::string(to_string(t.to));
  }
  const std::array<Split, 3> splits{Split::Train, Split::Val, Split::Test};
  std::array<TaskDataset*, 3> targets{&out.train, &out.val, &out.test};
  for (int i = 0; i < 3; ++i) {
    const Extraction ex = extract_sequences(manifest, splits[i], cfg.data.min_gap_years, cfg.data.max_gap_years,
                                            cfg.data.max_sequence_length);
    if (t.kind == TaskKind::StableClassification) {
      ClassificationSets sets = build_classification_sets(ex.pool);
      *targets[i] = t.num_images == 1 ? sets.singles : (t.num_images == 2 ? sets.pairs : sets.triplets);
    } else {
      ConversionSets sets = build_conversion_sets(ex.pool, t.from, t.to);
      *targets[i] = t.kind == TaskKind::ConversionDetection ? sets.detection : sets.prediction;
    }
  }
  return out;
}

}  // namespace tssl
