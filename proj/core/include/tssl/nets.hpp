// SPDX-License-Identifier: Apache-2.0
//
// Residual 3D encoder and the heads attached to it: order verification,
// per-length permutation classifiers, contrastive projection and the
// gap-conditioned downstream classifier.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tssl/data_model.hpp"
#include "tssl/layers.hpp"

namespace tssl {

/// Thrown when a model lacks a component the caller asked for.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { TOV, TOP, TOPC, Supervised };
std::string_view to_string(Method m);
Method parse_method(std::string_view text);

/// Fixed sequence length of the order-verification input.
inline constexpr int kTovLength = 4;
/// Gap conditioning width: a sequence of T scans has T-1 gaps.
inline constexpr int kGapSlots = kTovLength - 1;
/// Gaps are divided by this before entering the downstream head.
inline constexpr double kGapNormalizerYears = 2.5;

struct EncoderConfig {
  /// "resnet10", "resnet18" or "resnet34".
  std::string architecture = "resnet18";
  /// Stage widths are round(64 * width_multiplier) * {1, 2, 4, 8}.
  double width_multiplier = 1.0;
  int stem_kernel = 7;
  Shape3 input_shape = kFullScaleShape;

  [[nodiscard]] int base_width() const;
  [[nodiscard]] int feature_dim() const { return 8 * base_width(); }
  [[nodiscard]] std::array<int, 4> blocks() const;
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// ResNet topology: strided stem conv, max pool, four residual stages and
/// global average pooling. Input [N, 1, D, H, W], output [N, feature_dim].
class Encoder {
 public:
  Encoder(const EncoderConfig& config, InitRng& rng);

  Tensor forward(const Tensor& volumes, Mode mode);
  /// Accumulates parameter gradients; the input gradient is discarded.
  void backward(const Tensor& dfeatures);

  [[nodiscard]] const EncoderConfig& config() const { return config_; }
  void parameters(std::vector<Parameter*>& out);
  void buffers(std::vector<Buffer>& out);

 private:
  EncoderConfig config_;
  Conv3d stem_conv_;
  BatchNorm3d stem_bn_;
  Relu stem_relu_;
  MaxPool3d pool_;
  std::vector<BasicBlock> blocks_;
  GlobalAvgPool gap_;
};

/// Two hidden ReLU layers followed by a linear output layer. When
/// `gap_width` > 0, gap features are appended to the second hidden layer's
/// activations before the output layer.
class ClassifierHead {
 public:
  ClassifierHead(std::string name, int input_width, std::array<int, 2> hidden, int outputs, int gap_width,
                 InitRng& rng);

  /// Keeps the trunk (hidden layers) of `source` and draws a fresh output layer.
  static ClassifierHead with_new_output(const ClassifierHead& source, std::string name, int outputs, int gap_width,
                                        InitRng& rng);

  /// x: [N, input_width]; gaps: [N, gap_width] (ignored when gap_width == 0).
  Tensor forward(const Tensor& x, const Tensor* gaps = nullptr);
  /// Returns d/dx.
  Tensor backward(const Tensor& dlogits);

  [[nodiscard]] int input_width() const { return fc1_.in_features(); }
  [[nodiscard]] int outputs() const { return out_.out_features(); }
  [[nodiscard]] int gap_width() const { return gap_width_; }
  [[nodiscard]] std::array<int, 2> hidden() const { return {fc1_.out_features(), fc2_.out_features()}; }
  void parameters(std::vector<Parameter*>& out);
  void trunk_parameters(std::vector<Parameter*>& out);

 private:
  ClassifierHead() = default;
  Linear fc1_, fc2_, out_;
  Relu relu1_, relu2_;
  int gap_width_ = 0;
};

/// feature_dim -> feature_dim -> projection_dim with one ReLU.
class ProjectionHead {
 public:
  ProjectionHead(std::string name, int feature_dim, int projection_dim, InitRng& rng);

  Tensor forward(const Tensor& h);
  Tensor backward(const Tensor& dz);
  [[nodiscard]] int output_dim() const { return fc2_.out_features(); }
  void parameters(std::vector<Parameter*>& out);

 private:
  Linear fc1_, fc2_;
  Relu relu_;
};

struct HeadConfig {
  std::array<int, 2> hidden{512, 256};
  int projection_dim = 128;
  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

enum class TrunkSource { Fresh, Tov, Top };
std::string_view to_string(TrunkSource s);
TrunkSource parse_trunk_source(std::string_view text);

struct DownstreamInfo {
  int num_images = 1;
  int num_classes = 2;
  /// Feature vectors concatenated into the head: k, or 4 for a padded
  /// order-verification trunk.
  int feature_slots = 1;
  int gap_width = 0;
  TrunkSource trunk = TrunkSource::Fresh;
  friend bool operator==(const DownstreamInfo&, const DownstreamInfo&) = default;
};

/// One encoder shared by every head of a model instance.
class Network {
 public:
  Network(Method method, EncoderConfig encoder, HeadConfig heads, std::uint64_t seed);

  [[nodiscard]] Method method() const { return method_; }
  [[nodiscard]] const HeadConfig& head_config() const { return head_config_; }
  [[nodiscard]] int feature_dim() const { return encoder_.config().feature_dim(); }

  Encoder& encoder() { return encoder_; }
  [[nodiscard]] const Encoder& encoder() const { return encoder_; }
  [[nodiscard]] bool has_tov_head() const { return tov_head_.has_value(); }
  ClassifierHead& tov_head();
  [[nodiscard]] bool has_top_head(int n) const { return top_heads_.contains(n); }
  [[nodiscard]] std::vector<int> top_head_lengths() const;
  ClassifierHead& top_head(int n);
  [[nodiscard]] bool has_projection() const { return projection_.has_value(); }
  ProjectionHead& projection();

  /// Builds the downstream classifier. For k >= 2 and a pre-trained method
  /// the trunk of the matching pretext head is reused and a new output layer
  /// with gap conditioning is drawn; otherwise the head is fresh.
  void attach_downstream(int num_images, int num_classes, std::uint64_t seed);
  /// Restores a downstream head shape (used when loading checkpoints).
  void attach_downstream(const DownstreamInfo& info, std::uint64_t seed);
  [[nodiscard]] bool has_downstream() const { return downstream_.has_value(); }
  ClassifierHead& downstream();
  [[nodiscard]] const DownstreamInfo& downstream_info() const;
  /// Drops pretext heads and the projection (after fine-tuning setup).
  void drop_pretext_heads();

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> head_parameters();
  std::vector<Buffer> buffers();
  void zero_grad();

  // Single-sample evaluation-mode API.
  std::vector<Real> encode(const Volume& volume);
  /// Exactly kTovLength feature vectors -> probability in (0, 1).
  Real tov_forward(std::span<const std::vector<Real>> features);
  /// n feature vectors -> n! logits.
  std::vector<Real> top_forward(std::span<const std::vector<Real>> features, int n);
  std::vector<Real> project(std::span<const Real> feature);
  /// feature_slots feature vectors and num_images - 1 gaps -> class logits.
  std::vector<Real> downstream_forward(std::span<const std::vector<Real>> features, std::span<const double> gaps);

 private:
  Method method_;
  HeadConfig head_config_;
  Encoder encoder_;
  std::optional<ClassifierHead> tov_head_;
  std::map<int, ClassifierHead> top_heads_;
  std::optional<ProjectionHead> projection_;
  std::optional<ClassifierHead> downstream_;
  DownstreamInfo downstream_info_{};
};

/// Stacks volumes into [N, 1, D, H, W].
Tensor stack_volumes(std::span<const Volume* const> volumes);
/// Rows of `features` ([M, F]) concatenated per sample: [B, slots * F].
Tensor gather_rows(const Tensor& features, const std::vector<std::vector<int>>& rows);
/// Adjoint of gather_rows: accumulates `dconcat` into `dfeatures`.
void scatter_rows(const Tensor& dconcat, const std::vector<std::vector<int>>& rows, Tensor& dfeatures);
/// Each gap divided by kGapNormalizerYears, zero padded to `width`.
std::vector<Real> gap_features(std::span<const double> gaps, int width);

std::vector<Real> softmax(std::span<const Real> logits);
Real sigmoid(Real x);

}  // namespace tssl
