// SPDX-License-Identifier: Apache-2.0
//
// Stochastic volume transforms. Every function takes an explicit RNG stream
// so a fixed seed reproduces its output bitwise.

#pragma once

#include <array>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "tssl/data_model.hpp"

namespace tssl {

using Rng = std::mt19937_64;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Pre-training augmentation. The affine draw is shared by every timepoint
/// of a sequence; smoothing and noise are drawn per timepoint.
struct AugmentParams {
  double rotation_max_rad = 0.34;
  double translation_max_vox = 15.0;
  Interval scale_range{0.9, 1.3};
  Interval smooth_sigma_range{0.25, 1.5};
  Interval noise_std_range{0.05, 0.09};
  double per_transform_prob = 0.5;

  void validate() const;
  friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

/// Fine-tuning augmentation, applied in declaration order.
struct DownstreamAugmentParams {
  /// Minimum crop extent as a fraction of the working resolution.
  std::array<double, 3> crop_min_fraction{90.0 / 150.0, 115.0 / 192.0, 115.0 / 192.0};
  double flip_prob = 0.5;
  double affine_prob = 0.7;
  double rotation_max_rad = 0.1;
  double scale_delta = 0.15;
  double translation_max_vox = 5.0;
  double shift_prob = 0.5;
  double shift_offset = 0.1;
  double noise_prob = 0.2;
  double noise_std = 0.1;

  void validate() const;
  /// No-op configuration: full-size crop, every probability zero.
  static DownstreamAugmentParams identity();
  friend bool operator==(const DownstreamAugmentParams&, const DownstreamAugmentParams&) = default;
};

struct NormStats {
  double train_mean = 0.0;
  double train_std = 1.0;
};

enum class NormMode { ZScore, StdSubtract };
std::string_view to_string(NormMode mode);
NormMode parse_norm_mode(std::string_view text);

/// Rotation (x, y, z radians), per-axis scale and translation (voxels) about
/// the volume center.
struct AffineDraw {
  std::array<double, 3> rotation{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> translation{0.0, 0.0, 0.0};
};

/// Trilinear resampling with zero padding outside the field of view.
Volume apply_affine(const Volume& vol, const AffineDraw& affine);
/// Separable Gaussian blur, one sigma per axis (d, h, w), zero padded.
Volume gaussian_smooth(const Volume& vol, std::array<double, 3> sigma);
/// Trilinear resize of the box [origin, origin + size) to `out_shape`.
Volume crop_resize(const Volume& vol, std::array<int, 3> origin, Shape3 size, Shape3 out_shape);
/// Left-right flip along the width axis.
Volume flip_width(const Volume& vol);

std::vector<Volume> pretrain_augment(std::span<const Volume> seq, const AugmentParams& params, Rng& rng);

struct TwoViews {
  std::vector<Volume> view_i;
  std::vector<Volume> view_j;
};
TwoViews make_two_views(std::span<const Volume> seq, const AugmentParams& params, Rng& rng);

Volume downstream_augment(const Volume& vol, const DownstreamAugmentParams& params, Rng& rng);
/// Multi-image variant: crop, flip and affine are drawn once for all inputs,
/// intensity shift and noise per input.
std::vector<Volume> downstream_augment_sequence(std::span<const Volume> seq,
                                                const DownstreamAugmentParams& params, Rng& rng);

NormStats compute_norm_stats(std::span<const Volume* const> volumes);
Volume normalize(const Volume& vol, const NormStats& stats, NormMode mode);

}  // namespace tssl
