// SPDX-License-Identifier: Apache-2.0

#include "tssl/nets.hpp"

#include <algorithm>
#include <cmath>

#include "tssl/permutation.hpp"

namespace tssl {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::TOV: return "TOV";
    case Method::TOP: return "TOP";
    case Method::TOPC: return "TOPC";
    case Method::Supervised: return "SUPERVISED";
  }
  return "SUPERVISED";
}

Method parse_method(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "TOV") return Method::TOV;
  if (up == "TOP") return Method::TOP;
  if (up == "TOPC") return Method::TOPC;
  if (up == "SUPERVISED") return Method::Supervised;
  throw ValidationError("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(TrunkSource s) {
  switch (s) {
    case TrunkSource::Fresh: return "FRESH";
    case TrunkSource::Tov: return "TOV";
    case TrunkSource::Top: return "TOP";
  }
  return "FRESH";
}

TrunkSource parse_trunk_source(std::string_view text) {
  if (text == "FRESH") return TrunkSource::Fresh;
  if (text == "TOV") return TrunkSource::Tov;
  if (text == "TOP") return TrunkSource::Top;
  throw ValidationError("unknown trunk source '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- EncoderConfig

int EncoderConfig::base_width() const {
  return std::max(1, static_cast<int>(std::lround(64.0 * width_multiplier)));
}

std::array<int, 4> EncoderConfig::blocks() const {
  if (architecture == "resnet10") return {1, 1, 1, 1};
  if (architecture == "resnet18") return {2, 2, 2, 2};
  if (architecture == "resnet34") return {3, 4, 6, 3};
  throw ValidationError("unknown encoder architecture '" + architecture + "'");
}

void EncoderConfig::validate() const {
  static_cast<void>(blocks());  // throws on unknown architectures
  if (!(width_multiplier > 0.0)) throw ValidationError("encoder width_multiplier must be positive");
  if (feature_dim() < 8) throw ValidationError("encoder feature_dim must be >= 8");
  if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ValidationError("encoder stem_kernel must be odd");
  if (!input_shape.valid()) throw ValidationError("encoder input shape must be positive");
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(const EncoderConfig& config, InitRng& rng) : config_(config) {
  config_.validate();
  const int base = config_.base_width();
  stem_conv_ = Conv3d("encoder.stem.conv", 1, base, config_.stem_kernel, 2, config_.stem_kernel / 2, rng);
  stem_bn_ = BatchNorm3d("encoder.stem.bn", base);
  const auto counts = config_.blocks();
  int in = base;
  for (int stage = 0; stage < 4; ++stage) {
    const int out = base << stage;
    for (int b = 0; b < counts[stage]; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks_.emplace_back("encoder.layer" + std::to_string(stage + 1) + "." + std::to_string(b), in, out, stride,
                           rng);
      in = out;
    }
  }
}

Tensor Encoder::forward(const Tensor& volumes, Mode mode) {
  const Shape3& s = config_.input_shape;
  if (volumes.rank() != 5 || volumes.dim(1) != 1 || volumes.dim(2) != s.depth || volumes.dim(3) != s.height ||
      volumes.dim(4) != s.width) {
    throw ValidationError("encoder expects [N, 1, " + std::to_string(s.depth) + ", " + std::to_string(s.height) +
                          ", " + std::to_string(s.width) + "], got " + shape_string(volumes.shape()));
  }
  Tensor x = pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(volumes), mode)));
  for (auto& block : blocks_) x = block.forward(x, mode);
  return gap_.forward(x);
}

void Encoder::backward(const Tensor& dfeatures) {
  Tensor d = gap_.backward(dfeatures);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
  d = stem_bn_.backward(stem_relu_.backward(pool_.backward(d)));
  stem_conv_.backward(d);
}

void Encoder::parameters(std::vector<Parameter*>& out) {
  stem_conv_.parameters(out);
  stem_bn_.parameters(out);
  for (auto& b : blocks_) b.parameters(out);
}

void Encoder::buffers(std::vector<Buffer>& out) {
  stem_bn_.buffers(out);
  for (auto& b : blocks_) b.buffers(out);
}

// ---------------------------------------------------------------- ClassifierHead

ClassifierHead::ClassifierHead(std::string name, int input_width, std::array<int, 2> hidden, int outputs,
                               int gap_width, InitRng& rng)
    : fc1_(name + ".fc1", input_width, hidden[0], rng),
      fc2_(name + ".fc2", hidden[0], hidden[1], rng),
      out_(name + ".out", hidden[1] + gap_width, outputs, rng),
      gap_width_(gap_width) {
  if (gap_width < 0) throw ValidationError("gap width must be non-negative");
}

ClassifierHead ClassifierHead::with_new_output(const ClassifierHead& source, std::string name, int outputs,
                                               int gap_width, InitRng& rng) {
  ClassifierHead head;
  head.fc1_ = source.fc1_;
  head.fc2_ = source.fc2_;
  head.fc1_.rename(name + ".fc1");
  head.fc2_.rename(name + ".fc2");
  head.out_ = Linear(name + ".out", source.fc2_.out_features() + gap_width, outputs, rng);
  head.gap_width_ = gap_width;
  return head;
}

Tensor ClassifierHead::forward(const Tensor& x, const Tensor* gaps) {
  Tensor h = relu2_.forward(fc2_.forward(relu1_.forward(fc1_.forward(x))));
  if (gap_width_ == 0) return out_.forward(h);
  const int n = h.dim(0);
  const int width = h.dim(1);
  if (gaps == nullptr || gaps->rank() != 2 || gaps->dim(0) != n || gaps->dim(1) != gap_width_) {
    throw ValidationError("downstream head expects gap features [" + std::to_string(n) + ", " +
                          std::to_string(gap_width_) + "]");
  }
  Tensor joined({n, width + gap_width_});
  for (int i = 0; i < n; ++i) {
    std::copy_n(h.ptr() + static_cast<std::size_t>(i) * width, width,
                joined.ptr() + static_cast<std::size_t>(i) * (width + gap_width_));
    std::copy_n(gaps->ptr() + static_cast<std::size_t>(i) * gap_width_, gap_width_,
                joined.ptr() + static_cast<std::size_t>(i) * (width + gap_width_) + width);
  }
  return out_.forward(joined);
}

Tensor ClassifierHead::backward(const Tensor& dlogits) {
  Tensor dh = out_.backward(dlogits);
  if (gap_width_ > 0) {
    const int n = dh.dim(0);
    const int width = fc2_.out_features();
    Tensor trimmed({n, width});
    for (int i = 0; i < n; ++i) {
      std::copy_n(dh.ptr() + static_cast<std::size_t>(i) * (width + gap_width_), width,
                  trimmed.ptr() + static_cast<std::size_t>(i) * width);
    }
    dh = std::move(trimmed);
  }
  return fc1_.backward(relu1_.backward(fc2_.backward(relu2_.backward(dh))));
}

void ClassifierHead::parameters(std::vector<Parameter*>& out) {
  trunk_parameters(out);
  out_.parameters(out);
}

void ClassifierHead::trunk_parameters(std::vector<Parameter*>& out) {
  fc1_.parameters(out);
  fc2_.parameters(out);
}

// ---------------------------------------------------------------- ProjectionHead

ProjectionHead::ProjectionHead(std::string name, int feature_dim, int projection_dim, InitRng& rng)
    : fc1_(name + ".fc1", feature_dim, feature_dim, rng), fc2_(name + ".fc2", feature_dim, projection_dim, rng) {}

Tensor ProjectionHead::forward(const Tensor& h) { return fc2_.forward(relu_.forward(fc1_.forward(h))); }

Tensor ProjectionHead::backward(const Tensor& dz) { return fc1_.backward(relu_.backward(fc2_.backward(dz))); }

void ProjectionHead::parameters(std::vector<Parameter*>& out) {
  fc1_.parameters(out);
  fc2_.parameters(out);
}

// ---------------------------------------------------------------- Network

namespace {

InitRng seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return InitRng(seq);
}

}  // namespace

Network::Network(Method method, EncoderConfig encoder, HeadConfig heads, std::uint64_t seed)
    : method_(method), head_config_(heads), encoder_([&] {
        InitRng rng = seeded(seed, 0);
        return Encoder(encoder, rng);
      }()) {
  InitRng rng = seeded(seed, 1);
  const int f = feature_dim();
  if (method == Method::TOV) {
    tov_head_.emplace("tov_head", kTovLength * f, heads.hidden, 1, 0, rng);
  }
  if (method == Method::TOP || method == Method::TOPC) {
    for (int n = kMinSequenceLength; n <= kMaxSequenceLength; ++n) {
      top_heads_.emplace(n, ClassifierHead("top_head." + std::to_string(n), n * f, heads.hidden, factorial(n), 0, rng));
    }
  }
  if (method == Method::TOPC) {
    projection_.emplace("projection", f, heads.projection_dim, rng);
  }
}

ClassifierHead& Network::tov_head() {
  if (!tov_head_) throw ConfigError("model has no order-verification head");
  return *tov_head_;
}

std::vector<int> Network::top_head_lengths() const {
  std::vector<int> out;
  for (const auto& [n, _] : top_heads_) out.push_back(n);
  return out;
}

ClassifierHead& Network::top_head(int n) {
  auto it = top_heads_.find(n);
  if (it == top_heads_.end()) throw ConfigError("model has no permutation head for n=" + std::to_string(n));
  return it->second;
}

ProjectionHead& Network::projection() {
  if (!projection_) throw ConfigError("model has no projection head");
  return *projection_;
}

void Network::attach_downstream(int num_images, int num_classes, std::uint64_t seed) {
  if (num_images < 1 || num_images > 3) throw ValidationError("downstream tasks take 1 to 3 images");
  if (num_classes < 2) throw ValidationError("downstream tasks need at least 2 classes");
  DownstreamInfo info;
  info.num_images = num_images;
  info.num_classes = num_classes;
  info.gap_width = num_images >= 2 ? kGapSlots : 0;
  info.feature_slots = num_images;
  info.trunk = TrunkSource::Fresh;
  if (num_images >= 2) {
    if (method_ == Method::TOV) {
      info.trunk = TrunkSource::Tov;
      info.feature_slots = kTovLength;
    } else if (method_ == Method::TOP || method_ == Method::TOPC) {
      info.trunk = TrunkSource::Top;
    }
  }
  attach_downstream(info, seed);
}

void Network::attach_downstream(const DownstreamInfo& info, std::uint64_t seed) {
  InitRng rng = seeded(seed, 2);
  const int f = feature_dim();
  // Without the source pretext head (a reloaded fine-tuned model) only the
  // shape matters; weights come from the checkpoint.
  TrunkSource source = info.trunk;
  if ((source == TrunkSource::Tov && !tov_head_) || (source == TrunkSource::Top && !has_top_head(info.num_images))) {
    source = TrunkSource::Fresh;
  }
  switch (source) {
    case TrunkSource::Fresh:
      downstream_.emplace("downstream", info.feature_slots * f, head_config_.hidden, info.num_classes,
                          info.gap_width, rng);
      break;
    case TrunkSource::Tov:
      downstream_ = ClassifierHead::with_new_output(tov_head(), "downstream", info.num_classes, info.gap_width, rng);
      break;
    case TrunkSource::Top:
      downstream_ =
          ClassifierHead::with_new_output(top_head(info.num_images), "downstream", info.num_classes, info.gap_width, rng);
      break;
  }
  if (downstream_->input_width() != info.feature_slots * f) {
    throw ConfigError("downstream trunk input width does not match feature slots");
  }
  downstream_info_ = info;
}

ClassifierHead& Network::downstream() {
  if (!downstream_) throw ConfigError("model has no downstream head");
  return *downstream_;
}

const DownstreamInfo& Network::downstream_info() const {
  if (!downstream_) throw ConfigError("model has no downstream head");
  return downstream_info_;
}

void Network::drop_pretext_heads() {
  tov_head_.reset();
  top_heads_.clear();
  projection_.reset();
}

std::vector<Parameter*> Network::encoder_parameters() {
  std::vector<Parameter*> out;
  encoder_.parameters(out);
  return out;
}

std::vector<Parameter*> Network::head_parameters() {
  std::vector<Parameter*> out;
  if (tov_head_) tov_head_->parameters(out);
  for (auto& [_, head] : top_heads_) head.parameters(out);
  if (projection_) projection_->parameters(out);
  if (downstream_) downstream_->parameters(out);
  return out;
}

std::vector<Parameter*> Network::parameters() {
  auto out = encoder_parameters();
  const auto heads = head_parameters();
  out.insert(out.end(), heads.begin(), heads.end());
  return out;
}

std::vector<Buffer> Network::buffers() {
  std::vector<Buffer> out;
  encoder_.buffers(out);
  return out;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::vector<Real> Network::encode(const Volume& volume) {
  const Volume* ptr = &volume;
  const Tensor h = encoder_.forward(stack_volumes(std::span<const Volume* const>(&ptr, 1)), Mode::Eval);
  return {h.data().begin(), h.data().end()};
}

namespace {

Tensor concat_features(std::span<const std::vector<Real>> features, int expected, int dim) {
  if (static_cast<int>(features.size()) != expected) {
    throw ValidationError("expected " + std::to_string(expected) + " feature vectors, got " +
                          std::to_string(features.size()));
  }
  Tensor x({1, expected * dim});
  for (int k = 0; k < expected; ++k) {
    if (static_cast<int>(features[k].size()) != dim) throw ValidationError("feature vector length mismatch");
    std::copy(features[k].begin(), features[k].end(), x.ptr() + static_cast<std::size_t>(k) * dim);
  }
  return x;
}

}  // namespace

Real Network::tov_forward(std::span<const std::vector<Real>> features) {
  const Tensor x = concat_features(features, kTovLength, feature_dim());
  return sigmoid(tov_head().forward(x)[0]);
}

std::vector<Real> Network::top_forward(std::span<const std::vector<Real>> features, int n) {
  ClassifierHead& head = top_head(n);
  const Tensor logits = head.forward(concat_features(features, n, feature_dim()));
  return {logits.data().begin(), logits.data().end()};
}

std::vector<Real> Network::project(std::span<const Real> feature) {
  if (static_cast<int>(feature.size()) != feature_dim()) throw ValidationError("feature vector length mismatch");
  Tensor h({1, feature_dim()});
  std::copy(feature.begin(), feature.end(), h.ptr());
  const Tensor z = projection().forward(h);
  return {z.data().begin(), z.data().end()};
}

std::vector<Real> Network::downstream_forward(std::span<const std::vector<Real>> features,
                                              std::span<const double> gaps) {
  const DownstreamInfo& info = downstream_info();
  if (static_cast<int>(gaps.size()) != info.num_images - 1) {
    throw ValidationError("downstream head expects " + std::to_string(info.num_images - 1) + " gaps, got " +
                          std::to_string(gaps.size()));
  }
  const Tensor x = concat_features(features, info.feature_slots, feature_dim());
  Tensor g({1, info.gap_width});
  const auto gf = gap_features(gaps, info.gap_width);
  std::copy(gf.begin(), gf.end(), g.ptr());
  const Tensor logits = downstream().forward(x, &g);
  return {logits.data().begin(), logits.data().end()};
}

// ---------------------------------------------------------------- helpers

Tensor stack_volumes(std::span<const Volume* const> volumes) {
  if (volumes.empty()) throw ValidationError("cannot stack zero volumes");
  const Shape3 s = volumes.front()->shape();
  Tensor x({static_cast<int>(volumes.size()), 1, s.depth, s.height, s.width});
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    if (!(volumes[i]->shape() == s)) throw ValidationError("cannot stack volumes of different shapes");
    const auto src = volumes[i]->data();
    std::copy(src.begin(), src.end(), x.ptr() + i * s.voxels());
  }
  return x;
}

Tensor gather_rows(const Tensor& features, const std::vector<std::vector<int>>& rows) {
  if (rows.empty()) throw ValidationError("gather_rows: no samples");
  const int f = features.dim(1);
  const int slots = static_cast<int>(rows.front().size());
  Tensor out({static_cast<int>(rows.size()), slots * f});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (static_cast<int>(rows[b].size()) != slots) throw ValidationError("gather_rows: ragged slots");
    for (int k = 0; k < slots; ++k) {
      const int r = rows[b][k];
      if (r < 0 || r >= features.dim(0)) throw ValidationError("gather_rows: row out of range");
      std::copy_n(features.ptr() + static_cast<std::size_t>(r) * f, f,
                  out.ptr() + (b * slots + k) * static_cast<std::size_t>(f));
    }
  }
  return out;
}

void scatter_rows(const Tensor& dconcat, const std::vector<std::vector<int>>& rows, Tensor& dfeatures) {
  const int f = dfeatures.dim(1);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const int slots = static_cast<int>(rows[b].size());
    for (int k = 0; k < slots; ++k) {
      Real* dst = dfeatures.ptr() + static_cast<std::size_t>(rows[b][k]) * f;
      const Real* src = dconcat.ptr() + (b * slots + k) * static_cast<std::size_t>(f);
      for (int j = 0; j < f; ++j) dst[j] += src[j];
    }
  }
}

std::vector<Real> gap_features(std::span<const double> gaps, int width) {
  if (static_cast<int>(gaps.size()) > width) throw ValidationError("more gaps than conditioning slots");
  std::vector<Real> out(width, 0.0);
  for (std::size_t i = 0; i < gaps.size(); ++i) out[i] = gaps[i] / kGapNormalizerYears;
  return out;
}

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const Real mx = *std::max_element(p.begin(), p.end());
  Real total = 0.0;
  for (Real& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (Real& v : p) v /= total;
  return p;
}

Real sigmoid(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace tssl
