// SPDX-License-Identifier: Apache-2.0

#include "tssl/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tssl/data_model.hpp"

namespace tssl {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  int c, d, h, w;
  int k, stride, pad;
  int od, oh, ow;
  [[nodiscard]] std::size_t out_voxels() const { return static_cast<std::size_t>(od) * oh * ow; }
  [[nodiscard]] std::size_t in_voxels() const { return static_cast<std::size_t>(d) * h * w; }
  [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(c) * k * k * k; }
};

ConvGeometry geometry(const Tensor& x, int k, int stride, int pad) {
  if (x.rank() != 5) throw ValidationError("conv3d expects [N, C, D, H, W], got " + shape_string(x.shape()));
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), x.dim(4), k, stride, pad, 0, 0, 0};
  g.od = (g.d + 2 * pad - k) / stride + 1;
  g.oh = (g.h + 2 * pad - k) / stride + 1;
  g.ow = (g.w + 2 * pad - k) / stride + 1;
  if (g.od <= 0 || g.oh <= 0 || g.ow <= 0) throw ValidationError("conv3d input too small for kernel");
  return g;
}

void im2col(const Real* src, const ConvGeometry& g, Real* cols) {
  const std::size_t p = g.out_voxels();
  std::size_t row = 0;
  for (int c = 0; c < g.c; ++c) {
    const Real* plane = src + static_cast<std::size_t>(c) * g.in_voxels();
    for (int kd = 0; kd < g.k; ++kd) {
      for (int kh = 0; kh < g.k; ++kh) {
        for (int kw = 0; kw < g.k; ++kw, ++row) {
          Real* out = cols + row * p;
          for (int od = 0; od < g.od; ++od) {
            const int id = od * g.stride - g.pad + kd;
            for (int oh = 0; oh < g.oh; ++oh) {
              const int ih = oh * g.stride - g.pad + kh;
              Real* dst = out + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
              if (id < 0 || id >= g.d || ih < 0 || ih >= g.h) {
                std::fill(dst, dst + g.ow, 0.0);
                continue;
              }
              const Real* line = plane + (static_cast<std::size_t>(id) * g.h + ih) * g.w;
              for (int ow = 0; ow < g.ow; ++ow) {
                const int iw = ow * g.stride - g.pad + kw;
                dst[ow] = (iw >= 0 && iw < g.w) ? line[iw] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ConvGeometry& g, Real* dst) {
  const std::size_t p = g.out_voxels();
  std::size_t row = 0;
  for (int c = 0; c < g.c; ++c) {
    Real* plane = dst + static_cast<std::size_t>(c) * g.in_voxels();
    for (int kd = 0; kd < g.k; ++kd) {
      for (int kh = 0; kh < g.k; ++kh) {
        for (int kw = 0; kw < g.k; ++kw, ++row) {
          const Real* in = cols + row * p;
          for (int od = 0; od < g.od; ++od) {
            const int id = od * g.stride - g.pad + kd;
            if (id < 0 || id >= g.d) continue;
            for (int oh = 0; oh < g.oh; ++oh) {
              const int ih = oh * g.stride - g.pad + kh;
              if (ih < 0 || ih >= g.h) continue;
              const Real* src = in + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
              Real* line = plane + (static_cast<std::size_t>(id) * g.h + ih) * g.w;
              for (int ow = 0; ow < g.ow; ++ow) {
                const int iw = ow * g.stride - g.pad + kw;
                if (iw >= 0 && iw < g.w) line[iw] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

void check_same_shape(const Tensor& a, const std::vector<int>& shape, const char* who) {
  if (a.shape() != shape) {
    throw ValidationError(std::string(who) + ": gradient shape " + shape_string(a.shape()) +
                          " does not match " + shape_string(shape));
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
               InitRng& rng)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      weight_(std::move(name) + ".weight", {out_channels, in_channels * kernel * kernel * kernel}) {
  // He initialisation over fan-out.
  const Real stddev = std::sqrt(2.0 / (static_cast<Real>(out_channels) * kernel * kernel * kernel));
  std::normal_distribution<Real> dist(0.0, stddev);
  for (Real& w : weight_.value.data()) w = dist(rng);
}

Tensor Conv3d::forward(const Tensor& x) {
  const ConvGeometry g = geometry(x, k_, stride_, pad_);
  if (g.c != cin_) throw ValidationError("conv3d channel mismatch");
  input_ = x;
  const int n = x.dim(0);
  const std::size_t p = g.out_voxels();
  const std::size_t kk = g.rows();
  Tensor y({n, cout_, g.od, g.oh, g.ow});
  std::vector<Real> cols(kk * p);
  CMapMat wm(weight_.value.ptr(), cout_, static_cast<Eigen::Index>(kk));
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + static_cast<std::size_t>(i) * g.c * g.in_voxels(), g, cols.data());
    CMapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
    MapMat ym(y.ptr() + static_cast<std::size_t>(i) * cout_ * p, cout_, static_cast<Eigen::Index>(p));
    ym.noalias() = wm * cm;
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& dy) {
  const ConvGeometry g = geometry(input_, k_, stride_, pad_);
  const int n = input_.dim(0);
  check_same_shape(dy, {n, cout_, g.od, g.oh, g.ow}, "conv3d");
  const std::size_t p = g.out_voxels();
  const std::size_t kk = g.rows();
  Tensor dx(input_.shape());
  std::vector<Real> cols(kk * p);
  std::vector<Real> dcols(kk * p);
  CMapMat wm(weight_.value.ptr(), cout_, static_cast<Eigen::Index>(kk));
  MapMat dwm(weight_.grad.ptr(), cout_, static_cast<Eigen::Index>(kk));
  for (int i = 0; i < n; ++i) {
    im2col(input_.ptr() + static_cast<std::size_t>(i) * g.c * g.in_voxels(), g, cols.data());
    CMapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
    CMapMat dym(dy.ptr() + static_cast<std::size_t>(i) * cout_ * p, cout_, static_cast<Eigen::Index>(p));
    dwm.noalias() += dym * cm.transpose();
    MapMat dcm(dcols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
    dcm.noalias() = wm.transpose() * dym;
    col2im(dcols.data(), g, dx.ptr() + static_cast<std::size_t>(i) * g.c * g.in_voxels());
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm3d

BatchNorm3d::BatchNorm3d(std::string name, int channels)
    : channels_(channels),
      name_(std::move(name)),
      gamma_(name_ + ".gamma", {channels}),
      beta_(name_ + ".beta", {channels}),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  gamma_.value.fill(1.0);
}

void BatchNorm3d::buffers(std::vector<Buffer>& out) {
  out.push_back({name_ + ".running_mean", &running_mean_});
  out.push_back({name_ + ".running_var", &running_var_});
}

Tensor BatchNorm3d::forward(const Tensor& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != channels_) {
    throw ValidationError("batchnorm expects [N, " + std::to_string(channels_) + ", ...], got " +
                          shape_string(x.shape()));
  }
  const int n = x.dim(0);
  const std::size_t spatial = x.size() / (static_cast<std::size_t>(n) * channels_);
  const std::size_t m = static_cast<std::size_t>(n) * spatial;
  last_mode_ = mode;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0);
  Tensor y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    Real mean = 0.0;
    Real var = 0.0;
    if (mode == Mode::Train) {
      for (int i = 0; i < n; ++i) {
        const Real* src = x.ptr() + (static_cast<std::size_t>(i) * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) mean += src[s];
      }
      mean /= static_cast<Real>(m);
      for (int i = 0; i < n; ++i) {
        const Real* src = x.ptr() + (static_cast<std::size_t>(i) * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) var += (src[s] - mean) * (src[s] - mean);
      }
      var /= static_cast<Real>(m);
      const Real unbiased = m > 1 ? var * static_cast<Real>(m) / static_cast<Real>(m - 1) : var;
      running_mean_[c] = (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean;
      running_var_[c] = (1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const Real inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    const Real g = gamma_.value[c];
    const Real b = beta_.value[c];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const Real xh = (x[off + s] - mean) * inv;
        xhat_[off + s] = xh;
        y[off + s] = g * xh + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& dy) {
  check_same_shape(dy, xhat_.shape(), "batchnorm");
  const int n = dy.dim(0);
  const std::size_t spatial = dy.size() / (static_cast<std::size_t>(n) * channels_);
  const Real m = static_cast<Real>(static_cast<std::size_t>(n) * spatial);
  Tensor dx(dy.shape());
  for (int c = 0; c < channels_; ++c) {
    Real sum_dy = 0.0;
    Real sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        sum_dy += dy[off + s];
        sum_dy_xhat += dy[off + s] * xhat_[off + s];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const Real scale = gamma_.value[c] * inv_std_[c];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        if (last_mode_ == Mode::Train) {
          dx[off + s] = scale * (dy[off + s] - sum_dy / m - xhat_[off + s] * sum_dy_xhat / m);
        } else {
          dx[off + s] = scale * dy[off + s];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x) {
  Tensor y(x.shape());
  mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) {
      y[i] = x[i];
      mask_[i] = 1;
    }
  }
  return y;
}

Tensor Relu::backward(const Tensor& dy) const {
  if (dy.size() != mask_.size()) throw ValidationError("relu: gradient size mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask_[i] ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------- MaxPool3d

Tensor MaxPool3d::forward(const Tensor& x) {
  const ConvGeometry g = geometry(x, k_, stride_, pad_);
  in_shape_ = x.shape();
  const int n = x.dim(0);
  Tensor y({n, g.c, g.od, g.oh, g.ow});
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < g.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * g.c + c) * g.in_voxels();
      for (int od = 0; od < g.od; ++od) {
        for (int oh = 0; oh < g.oh; ++oh) {
          for (int ow = 0; ow < g.ow; ++ow, ++o) {
            Real best = -std::numeric_limits<Real>::infinity();
            std::size_t best_idx = base;
            for (int kd = 0; kd < k_; ++kd) {
              const int id = od * stride_ - pad_ + kd;
              if (id < 0 || id >= g.d) continue;
              for (int kh = 0; kh < k_; ++kh) {
                const int ih = oh * stride_ - pad_ + kh;
                if (ih < 0 || ih >= g.h) continue;
                for (int kw = 0; kw < k_; ++kw) {
                  const int iw = ow * stride_ - pad_ + kw;
                  if (iw < 0 || iw >= g.w) continue;
                  const std::size_t idx = base + (static_cast<std::size_t>(id) * g.h + ih) * g.w + iw;
                  if (x[idx] > best) {
                    best = x[idx];
                    best_idx = idx;
                  }
                }
              }
            }
            y[o] = best;
            argmax_[o] = best_idx;
          }
        }
      }
    }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& dy) const {
  if (dy.size() != argmax_.size()) throw ValidationError("maxpool: gradient size mismatch");
  Tensor dx(in_shape_);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x) {
  if (x.rank() != 5) throw ValidationError("global pool expects [N, C, D, H, W]");
  in_shape_ = x.shape();
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t s = x.size() / (static_cast<std::size_t>(n) * c);
  Tensor y({n, c});
  for (std::size_t row = 0; row < static_cast<std::size_t>(n) * c; ++row) {
    Real acc = 0.0;
    for (std::size_t j = 0; j < s; ++j) acc += x[row * s + j];
    y[row] = acc / static_cast<Real>(s);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) const {
  Tensor dx(in_shape_);
  const std::size_t rows = dy.size();
  if (rows == 0) return dx;
  const std::size_t s = dx.size() / rows;
  for (std::size_t row = 0; row < rows; ++row) {
    const Real g = dy[row] / static_cast<Real>(s);
    for (std::size_t j = 0; j < s; ++j) dx[row * s + j] = g;
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features, InitRng& rng)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_features));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  for (Real& w : weight_.value.data()) w = dist(rng);
  for (Real& b : bias_.value.data()) b = dist(rng);
}

void Linear::rename(const std::string& name) {
  weight_.name = name + ".weight";
  bias_.name = name + ".bias";
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ValidationError("linear expects [N, " + std::to_string(in_) + "], got " + shape_string(x.shape()));
  }
  input_ = x;
  const int n = x.dim(0);
  Tensor y({n, out_});
  CMapMat xm(x.ptr(), n, in_);
  CMapMat wm(weight_.value.ptr(), out_, in_);
  MapMat ym(y.ptr(), n, out_);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) y[static_cast<std::size_t>(i) * out_ + o] += bias_.value[o];
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const int n = input_.dim(0);
  check_same_shape(dy, {n, out_}, "linear");
  CMapMat dym(dy.ptr(), n, out_);
  CMapMat xm(input_.ptr(), n, in_);
  CMapMat wm(weight_.value.ptr(), out_, in_);
  MapMat dwm(weight_.grad.ptr(), out_, in_);
  dwm.noalias() += dym.transpose() * xm;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dy[static_cast<std::size_t>(i) * out_ + o];
  Tensor dx({n, in_});
  MapMat dxm(dx.ptr(), n, in_);
  dxm.noalias() = dym * wm;
  return dx;
}

// ---------------------------------------------------------------- BasicBlock

BasicBlock::BasicBlock(std::string name, int in_channels, int out_channels, int stride, InitRng& rng)
    : conv1_(name + ".conv1", in_channels, out_channels, 3, stride, 1, rng),
      conv2_(name + ".conv2", out_channels, out_channels, 3, 1, 1, rng),
      bn1_(name + ".bn1", out_channels),
      bn2_(name + ".bn2", out_channels),
      has_projection_(stride != 1 || in_channels != out_channels) {
  if (has_projection_) {
    proj_conv_ = Conv3d(name + ".downsample.conv", in_channels, out_channels, 1, stride, 0, rng);
    proj_bn_ = BatchNorm3d(name + ".downsample.bn", out_channels);
  }
}

Tensor BasicBlock::forward(const Tensor& x, Mode mode) {
  Tensor main = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
  main = bn2_.forward(conv2_.forward(main), mode);
  const Tensor shortcut = has_projection_ ? proj_bn_.forward(proj_conv_.forward(x), mode) : x;
  if (shortcut.shape() != main.shape()) throw ValidationError("residual shape mismatch");
  for (std::size_t i = 0; i < main.size(); ++i) main[i] += shortcut[i];
  return relu_out_.forward(main);
}

Tensor BasicBlock::backward(const Tensor& dy) {
  const Tensor d = relu_out_.backward(dy);
  Tensor dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(d)))));
  const Tensor dshort = has_projection_ ? proj_conv_.backward(proj_bn_.backward(d)) : d;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dshort[i];
  return dx;
}

void BasicBlock::parameters(std::vector<Parameter*>& out) {
  conv1_.parameters(out);
  bn1_.parameters(out);
  conv2_.parameters(out);
  bn2_.parameters(out);
  if (has_projection_) {
    proj_conv_.parameters(out);
    proj_bn_.parameters(out);
  }
}

void BasicBlock::buffers(std::vector<Buffer>& out) {
  bn1_.buffers(out);
  bn2_.buffers(out);
  if (has_projection_) proj_bn_.buffers(out);
}

}  // namespace tssl
