// SPDX-License-Identifier: Apache-2.0
//
// Layers with explicit backward passes. Each layer caches what its backward
// needs from the most recent forward call, so one forward must precede each
// backward. Gradients accumulate into Parameter::grad.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "tssl/tensor.hpp"

namespace tssl {

enum class Mode { Train, Eval };

using InitRng = std::mt19937_64;

/// 3D convolution without bias on [N, C, D, H, W] tensors.
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding, InitRng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out) { out.push_back(&weight_); }
  [[nodiscard]] int out_channels() const { return cout_; }

 private:
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Parameter weight_;  // [cout, cin * k^3]
  Tensor input_;
};

class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  BatchNorm3d(std::string name, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void buffers(std::vector<Buffer>& out);

  static constexpr Real kEps = 1e-5;
  static constexpr Real kMomentum = 0.1;

 private:
  int channels_ = 0;
  std::string name_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<Real> inv_std_;
  Mode last_mode_ = Mode::Train;
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<unsigned char> mask_;
};

/// Max pooling with cubic window.
class MaxPool3d {
 public:
  MaxPool3d(int kernel = 3, int stride = 2, int padding = 1) : k_(kernel), stride_(stride), pad_(padding) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  int k_, stride_, pad_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// [N, C, D, H, W] -> [N, C].
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<int> in_shape_;
};

/// Affine map on [N, in] -> [N, out].
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features, InitRng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  [[nodiscard]] int in_features() const { return in_; }
  [[nodiscard]] int out_features() const { return out_; }
  /// Renames parameters (used when a trunk moves between heads).
  void rename(const std::string& name);

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_;  // [out, in]
  Parameter bias_;    // [out]
  Tensor input_;
};

/// Two 3x3x3 convolutions with batch norm and an identity or projected
/// shortcut.
class BasicBlock {
 public:
  BasicBlock(std::string name, int in_channels, int out_channels, int stride, InitRng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<Parameter*>& out);
  void buffers(std::vector<Buffer>& out);

 private:
  Conv3d conv1_, conv2_;
  BatchNorm3d bn1_, bn2_;
  Relu relu1_, relu_out_;
  bool has_projection_ = false;
  Conv3d proj_conv_;
  BatchNorm3d proj_bn_;
};

}  // namespace tssl
