// SPDX-License-Identifier: Apache-2.0

#include "tssl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace tssl {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

// Rotation about the depth, height and width axes, composed as Rw * Rh * Rd.
Mat3 rotation_matrix(const std::array<double, 3>& r) {
  const double c0 = std::cos(r[0]), s0 = std::sin(r[0]);
  const double c1 = std::cos(r[1]), s1 = std::sin(r[1]);
  const double c2 = std::cos(r[2]), s2 = std::sin(r[2]);
  const Mat3 rd{{{1, 0, 0}, {0, c0, -s0}, {0, s0, c0}}};
  const Mat3 rh{{{c1, 0, s1}, {0, 1, 0}, {-s1, 0, c1}}};
  const Mat3 rw{{{c2, -s2, 0}, {s2, c2, 0}, {0, 0, 1}}};
  return matmul(rw, matmul(rh, rd));
}

float sample_trilinear(const Volume& vol, double d, double h, double w) {
  const Shape3& s = vol.shape();
  const int d0 = static_cast<int>(std::floor(d));
  const int h0 = static_cast<int>(std::floor(h));
  const int w0 = static_cast<int>(std::floor(w));
  const double fd = d - d0, fh = h - h0, fw = w - w0;
  double acc = 0.0;
  for (int dd = 0; dd < 2; ++dd) {
    const int zi = d0 + dd;
    if (zi < 0 || zi >= s.depth) continue;
    const double wd = dd ? fd : 1.0 - fd;
    for (int hh = 0; hh < 2; ++hh) {
      const int yi = h0 + hh;
      if (yi < 0 || yi >= s.height) continue;
      const double wh = hh ? fh : 1.0 - fh;
      for (int ww = 0; ww < 2; ++ww) {
        const int xi = w0 + ww;
        if (xi < 0 || xi >= s.width) continue;
        const double wx = ww ? fw : 1.0 - fw;
        acc += wd * wh * wx * vol.at(zi, yi, xi);
      }
    }
  }
  return static_cast<float>(acc);
}

bool coin(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void add_noise(Volume& vol, double stddev, Rng& rng) {
  if (stddev <= 0.0) return;
  std::normal_distribution<double> noise(0.0, stddev);
  for (float& v : vol.data()) v = static_cast<float>(v + noise(rng));
}

AffineDraw draw_affine(Rng& rng, double rot, Interval scale, double translation) {
  AffineDraw a;
  for (double& r : a.rotation) r = uniform(rng, -rot, rot);
  for (double& s : a.scale) s = uniform(rng, scale.lo, scale.hi);
  for (double& t : a.translation) t = uniform(rng, -translation, translation);
  return a;
}

void check_uniform_shapes(std::span<const Volume> seq) {
  if (seq.empty()) throw ValidationError("augmentation needs at least one volume");
  for (const auto& v : seq) {
    if (!(v.shape() == seq.front().shape())) {
      throw ValidationError("sequence volumes differ in shape: " + to_string(v.shape()) + " vs " +
                            to_string(seq.front().shape()));
    }
  }
}

void check_interval(const Interval& i, const char* name) {
  if (!(i.lo <= i.hi)) throw ValidationError(std::string(name) + ": empty interval");
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must be in [0, 1]");
}

struct SpatialDraw {
  bool crop = false;
  std::array<int, 3> origin{};
  Shape3 size{};
  bool flip = false;
  bool affine = false;
  AffineDraw affine_draw{};
};

SpatialDraw draw_spatial(const Shape3& shape, const DownstreamAugmentParams& p, Rng& rng) {
  SpatialDraw s;
  const std::array<int, 3> full{shape.depth, shape.height, shape.width};
  std::array<int, 3> extent{};
  for (int a = 0; a < 3; ++a) {
    const int lo = std::clamp(static_cast<int>(std::lround(full[a] * p.crop_min_fraction[a])), 1, full[a]);
    extent[a] = lo == full[a] ? lo : std::uniform_int_distribution<int>(lo, full[a])(rng);
    s.origin[a] = extent[a] == full[a] ? 0 : std::uniform_int_distribution<int>(0, full[a] - extent[a])(rng);
    if (extent[a] != full[a]) s.crop = true;
  }
  s.size = {extent[0], extent[1], extent[2]};
  s.flip = coin(rng, p.flip_prob);
  if (coin(rng, p.affine_prob)) {
    s.affine = true;
    s.affine_draw = draw_affine(rng, p.rotation_max_rad, {1.0 - p.scale_delta, 1.0 + p.scale_delta},
                                p.translation_max_vox);
  }
  return s;
}

Volume apply_spatial(const Volume& vol, const SpatialDraw& s) {
  Volume out = s.crop ? crop_resize(vol, s.origin, s.size, vol.shape()) : vol;
  if (s.flip) out = flip_width(out);
  if (s.affine) out = apply_affine(out, s.affine_draw);
  return out;
}

void apply_intensity(Volume& vol, const DownstreamAugmentParams& p, Rng& rng) {
  if (coin(rng, p.shift_prob)) {
    const float offset = static_cast<float>(uniform(rng, -p.shift_offset, p.shift_offset));
    for (float& v : vol.data()) v += offset;
  }
  if (coin(rng, p.noise_prob)) add_noise(vol, p.noise_std, rng);
}

}  // namespace

void AugmentParams::validate() const {
  if (rotation_max_rad < 0.0 || translation_max_vox < 0.0) {
    throw ValidationError("augment rotation/translation bounds must be non-negative");
  }
  check_interval(scale_range, "augment.scale_range");
  check_interval(smooth_sigma_range, "augment.smooth_sigma_range");
  check_interval(noise_std_range, "augment.noise_std_range");
  if (scale_range.lo <= 0.0) throw ValidationError("augment.scale_range must be positive");
  if (smooth_sigma_range.lo < 0.0 || noise_std_range.lo < 0.0) {
    throw ValidationError("augment sigma and noise ranges must be non-negative");
  }
  check_prob(per_transform_prob, "augment.per_transform_prob");
}

void DownstreamAugmentParams::validate() const {
  for (double f : crop_min_fraction) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("downstream crop_min_fraction must be in (0, 1]");
  }
  check_prob(flip_prob, "downstream.flip_prob");
  check_prob(affine_prob, "downstream.affine_prob");
  check_prob(shift_prob, "downstream.shift_prob");
  check_prob(noise_prob, "downstream.noise_prob");
  if (scale_delta < 0.0 || scale_delta >= 1.0) throw ValidationError("downstream.scale_delta must be in [0, 1)");
  if (rotation_max_rad < 0.0 || translation_max_vox < 0.0 || shift_offset < 0.0 || noise_std < 0.0) {
    throw ValidationError("downstream augmentation magnitudes must be non-negative");
  }
}

DownstreamAugmentParams DownstreamAugmentParams::identity() {
  DownstreamAugmentParams p;
  p.crop_min_fraction = {1.0, 1.0, 1.0};
  p.flip_prob = p.affine_prob = p.shift_prob = p.noise_prob = 0.0;
  return p;
}

std::string_view to_string(NormMode mode) { return mode == NormMode::ZScore ? "ZSCORE" : "STD_SUBTRACT"; }

NormMode parse_norm_mode(std::string_view text) {
  if (text == "ZSCORE") return NormMode::ZScore;
  if (text == "STD_SUBTRACT") return NormMode::StdSubtract;
  throw ValidationError("unknown normalization mode '" + std::string(text) + "'");
}

Volume apply_affine(const Volume& vol, const AffineDraw& affine) {
  const Shape3& s = vol.shape();
  const Mat3 rot = rotation_matrix(affine.rotation);
  const Mat3 scale{{{affine.scale[0], 0, 0}, {0, affine.scale[1], 0}, {0, 0, affine.scale[2]}}};
  const Mat3 inv = inverse(matmul(rot, scale));
  const std::array<double, 3> c{(s.depth - 1) / 2.0, (s.height - 1) / 2.0, (s.width - 1) / 2.0};
  Volume out(s);
  for (int d = 0; d < s.depth; ++d) {
    for (int h = 0; h < s.height; ++h) {
      for (int w = 0; w < s.width; ++w) {
        const double p0 = d - c[0] - affine.translation[0];
        const double p1 = h - c[1] - affine.translation[1];
        const double p2 = w - c[2] - affine.translation[2];
        const double sd = inv[0][0] * p0 + inv[0][1] * p1 + inv[0][2] * p2 + c[0];
        const double sh = inv[1][0] * p0 + inv[1][1] * p1 + inv[1][2] * p2 + c[1];
        const double sw = inv[2][0] * p0 + inv[2][1] * p1 + inv[2][2] * p2 + c[2];
        out.at(d, h, w) = sample_trilinear(vol, sd, sh, sw);
      }
    }
  }
  return out;
}

Volume gaussian_smooth(const Volume& vol, std::array<double, 3> sigma) {
  const Shape3& s = vol.shape();
  const std::array<int, 3> dims{s.depth, s.height, s.width};
  const std::array<std::size_t, 3> stride{static_cast<std::size_t>(s.height) * s.width,
                                          static_cast<std::size_t>(s.width), 1};
  std::vector<double> cur(vol.data().begin(), vol.data().end());
  std::vector<double> next(cur.size());
  for (int axis = 0; axis < 3; ++axis) {
    if (sigma[axis] <= 0.0) continue;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma[axis])));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      kernel[k + radius] = std::exp(-0.5 * k * k / (sigma[axis] * sigma[axis]));
      total += kernel[k + radius];
    }
    for (double& k : kernel) k /= total;
    const int n = dims[axis];
    const std::size_t st = stride[axis];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const int pos = static_cast<int>((i / st) % n);
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int q = pos + k;
        if (q < 0 || q >= n) continue;
        acc += kernel[k + radius] * cur[i + static_cast<std::ptrdiff_t>(k) * static_cast<std::ptrdiff_t>(st)];
      }
      next[i] = acc;
    }
    cur.swap(next);
  }
  std::vector<float> data(cur.begin(), cur.end());
  return Volume(s, std::move(data));
}

Volume crop_resize(const Volume& vol, std::array<int, 3> origin, Shape3 size, Shape3 out_shape) {
  const Shape3& s = vol.shape();
  const std::array<int, 3> full{s.depth, s.height, s.width};
  const std::array<int, 3> ext{size.depth, size.height, size.width};
  for (int a = 0; a < 3; ++a) {
    if (ext[a] <= 0 || origin[a] < 0 || origin[a] + ext[a] > full[a]) {
      throw ValidationError("crop box outside the volume");
    }
  }
  if (size == s && out_shape == s) return vol;
  Volume out(out_shape);
  const std::array<int, 3> on{out_shape.depth, out_shape.height, out_shape.width};
  std::array<double, 3> ratio{};
  for (int a = 0; a < 3; ++a) ratio[a] = static_cast<double>(ext[a]) / on[a];
  for (int d = 0; d < on[0]; ++d) {
    const double sd = std::clamp(origin[0] + (d + 0.5) * ratio[0] - 0.5, 0.0, full[0] - 1.0);
    for (int h = 0; h < on[1]; ++h) {
      const double sh = std::clamp(origin[1] + (h + 0.5) * ratio[1] - 0.5, 0.0, full[1] - 1.0);
      for (int w = 0; w < on[2]; ++w) {
        const double sw = std::clamp(origin[2] + (w + 0.5) * ratio[2] - 0.5, 0.0, full[2] - 1.0);
        out.at(d, h, w) = sample_trilinear(vol, sd, sh, sw);
      }
    }
  }
  return out;
}

Volume flip_width(const Volume& vol) {
  const Shape3& s = vol.shape();
  Volume out(s);
  for (int d = 0; d < s.depth; ++d)
    for (int h = 0; h < s.height; ++h)
      for (int w = 0; w < s.width; ++w) out.at(d, h, w) = vol.at(d, h, s.width - 1 - w);
  return out;
}

std::vector<Volume> pretrain_augment(std::span<const Volume> seq, const AugmentParams& params, Rng& rng) {
  check_uniform_shapes(seq);
  params.validate();
  const double p = params.per_transform_prob;
  std::vector<Volume> out(seq.begin(), seq.end());
  if (coin(rng, p)) {
    const AffineDraw a = draw_affine(rng, params.rotation_max_rad, params.scale_range, params.translation_max_vox);
    for (auto& v : out) v = apply_affine(v, a);
  }
  for (auto& v : out) {
    if (coin(rng, p)) {
      std::array<double, 3> sigma{};
      for (double& sg : sigma) sg = uniform(rng, params.smooth_sigma_range.lo, params.smooth_sigma_range.hi);
      v = gaussian_smooth(v, sigma);
    }
    if (coin(rng, p)) add_noise(v, uniform(rng, params.noise_std_range.lo, params.noise_std_range.hi), rng);
  }
  return out;
}

TwoViews make_two_views(std::span<const Volume> seq, const AugmentParams& params, Rng& rng) {
  TwoViews views;
  views.view_i = pretrain_augment(seq, params, rng);
  views.view_j = pretrain_augment(seq, params, rng);
  return views;
}

Volume downstream_augment(const Volume& vol, const DownstreamAugmentParams& params, Rng& rng) {
  params.validate();
  const SpatialDraw spatial = draw_spatial(vol.shape(), params, rng);
  Volume out = apply_spatial(vol, spatial);
  apply_intensity(out, params, rng);
  return out;
}

std::vector<Volume> downstream_augment_sequence(std::span<const Volume> seq, const DownstreamAugmentParams& params,
                                                Rng& rng) {
  check_uniform_shapes(seq);
  params.validate();
  const SpatialDraw spatial = draw_spatial(seq.front().shape(), params, rng);
  std::vector<Volume> out;
  out.reserve(seq.size());
  for (const auto& v : seq) {
    out.push_back(apply_spatial(v, spatial));
    apply_intensity(out.back(), params, rng);
  }
  return out;
}

NormStats compute_norm_stats(std::span<const Volume* const> volumes) {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const Volume* v : volumes) {
    for (float x : v->data()) {
      sum += x;
      sum_sq += static_cast<double>(x) * x;
    }
    count += v->size();
  }
  if (count == 0) throw ValidationError("cannot compute normalization statistics of no voxels");
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
  return {mean, std::sqrt(var)};
}

Volume normalize(const Volume& vol, const NormStats& stats, NormMode mode) {
  if (!(stats.train_std > 0.0)) throw ValidationError("normalization requires train_std > 0");
  Volume out = vol;
  if (mode == NormMode::ZScore) {
    const double inv = 1.0 / stats.train_std;
    for (float& v : out.data()) v = static_cast<float>((v - stats.train_mean) * inv);
  } else {
    for (float& v : out.data()) v = static_cast<float>(v - stats.train_std);
  }
  return out;
}

}  // namespace tssl
