// SPDX-License-Identifier: Apache-2.0

#include "tssl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tssl/data_model.hpp"

namespace tssl {

Real bce_loss(int label, Real probability, Real eps) {
  if (label != 0 && label != 1) throw ValidationError("bce label must be 0 or 1");
  const Real p = std::clamp(probability, eps, 1.0 - eps);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

LossGrad bce_with_logits(const Tensor& logits, std::span<const int> labels, Real eps) {
  const std::size_t n = logits.size();
  if (labels.size() != n || n == 0) throw ValidationError("bce: label count must match logits");
  LossGrad out{0.0, logits.zeros_like()};
  for (std::size_t i = 0; i < n; ++i) {
    const Real z = logits[i];
    const Real p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out.loss += bce_loss(labels[i], p, eps);
    // d/dz of the clamped loss: zero where the clamp is active.
    if (p > eps && p < 1.0 - eps) out.grad[i] = (p - labels[i]) / static_cast<Real>(n);
  }
  out.loss /= static_cast<Real>(n);
  return out;
}

Real perm_ce_loss(std::span<const Real> logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw ValidationError("cross-entropy target " + std::to_string(target) + " out of range");
  }
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real total = 0.0;
  for (Real v : logits) total += std::exp(v - mx);
  return -(logits[target] - mx - std::log(total));
}

LossGrad cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw ValidationError("cross-entropy expects logits [B, C]");
  const int b = logits.dim(0);
  const int c = logits.dim(1);
  if (static_cast<int>(targets.size()) != b || b == 0) throw ValidationError("cross-entropy: target count mismatch");
  LossGrad out{0.0, logits.zeros_like()};
  for (int i = 0; i < b; ++i) {
    const std::span<const Real> row(logits.ptr() + static_cast<std::size_t>(i) * c, c);
    out.loss += perm_ce_loss(row, targets[i]);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real total = 0.0;
    for (Real v : row) total += std::exp(v - mx);
    for (int k = 0; k < c; ++k) {
      const Real p = std::exp(row[k] - mx) / total;
      out.grad[static_cast<std::size_t>(i) * c + k] = (p - (k == targets[i] ? 1.0 : 0.0)) / b;
    }
  }
  out.loss /= b;
  return out;
}

std::string_view to_string(NegativeSet s) { return s == NegativeSet::BothViews ? "BOTH_VIEWS" : "SAME_VIEW"; }

NegativeSet parse_negative_set(std::string_view text) {
  if (text == "BOTH_VIEWS") return NegativeSet::BothViews;
  if (text == "SAME_VIEW") return NegativeSet::SameView;
  throw ValidationError("unknown negative set '" + std::string(text) + "'");
}

NtXentResult ntxent_loss(const ContrastiveBatch& batch, NegativeSet negatives) {
  const Tensor& zi = batch.z_i;
  const Tensor& zj = batch.z_j;
  if (zi.rank() != 2 || zi.shape() != zj.shape()) throw ValidationError("ntxent: views must both be [B, d]");
  const int b = zi.dim(0);
  const int d = zi.dim(1);
  if (b < 2) throw ValidationError("ntxent needs at least 2 pairs");
  if (!(batch.temperature > 0.0)) throw ValidationError("ntxent temperature must be positive");
  const Real tau = batch.temperature;
  const int m = 2 * b;

  auto row = [&](int a) { return a < b ? zi.ptr() + static_cast<std::size_t>(a) * d : zj.ptr() + static_cast<std::size_t>(a - b) * d; };
  std::vector<Real> norms(m);
  std::vector<Real> unit(static_cast<std::size_t>(m) * d);
  for (int a = 0; a < m; ++a) {
    const Real* z = row(a);
    Real sq = 0.0;
    for (int k = 0; k < d; ++k) {
      if (!std::isfinite(z[k])) throw ValidationError("ntxent: non-finite projection");
      sq += z[k] * z[k];
    }
    if (!(sq > 0.0)) throw ValidationError("ntxent: zero-norm projection");
    norms[a] = std::sqrt(sq);
    for (int k = 0; k < d; ++k) unit[static_cast<std::size_t>(a) * d + k] = z[k] / norms[a];
  }
  std::vector<Real> sim(static_cast<std::size_t>(m) * m);
  for (int a = 0; a < m; ++a)
    for (int c = 0; c < m; ++c) {
      Real s = 0.0;
      for (int k = 0; k < d; ++k) s += unit[static_cast<std::size_t>(a) * d + k] * unit[static_cast<std::size_t>(c) * d + k];
      sim[static_cast<std::size_t>(a) * m + c] = s;
    }

  auto in_denominator = [&](int a, int c) {
    if (c == a) return false;
    if (negatives == NegativeSet::BothViews) return true;
    const int positive = a < b ? a + b : a - b;
    return c == positive || (c < b) == (a < b);
  };

  std::vector<Real> dunit(unit.size(), 0.0);
  Real total = 0.0;
  std::vector<Real> weights(m);
  for (int a = 0; a < m; ++a) {
    const int positive = a < b ? a + b : a - b;
    Real mx = -1e300;
    for (int c = 0; c < m; ++c)
      if (in_denominator(a, c)) mx = std::max(mx, sim[static_cast<std::size_t>(a) * m + c] / tau);
    Real denom = 0.0;
    for (int c = 0; c < m; ++c) {
      weights[c] = in_denominator(a, c) ? std::exp(sim[static_cast<std::size_t>(a) * m + c] / tau - mx) : 0.0;
      denom += weights[c];
    }
    total += -(sim[static_cast<std::size_t>(a) * m + positive] / tau - mx - std::log(denom));
    for (int c = 0; c < m; ++c) {
      const Real g = (weights[c] / denom - (c == positive ? 1.0 : 0.0)) / (tau * b);
      if (g == 0.0) continue;
      for (int k = 0; k < d; ++k) {
        dunit[static_cast<std::size_t>(a) * d + k] += g * unit[static_cast<std::size_t>(c) * d + k];
        dunit[static_cast<std::size_t>(c) * d + k] += g * unit[static_cast<std::size_t>(a) * d + k];
      }
    }
  }

  NtXentResult out{total / b, zi.zeros_like(), zj.zeros_like()};
  for (int a = 0; a < m; ++a) {
    const Real* u = unit.data() + static_cast<std::size_t>(a) * d;
    const Real* du = dunit.data() + static_cast<std::size_t>(a) * d;
    Real dot = 0.0;
    for (int k = 0; k < d; ++k) dot += u[k] * du[k];
    Real* dst = a < b ? out.grad_i.ptr() + static_cast<std::size_t>(a) * d : out.grad_j.ptr() + static_cast<std::size_t>(a - b) * d;
    for (int k = 0; k < d; ++k) dst[k] = (du[k] - u[k] * dot) / norms[a];
  }
  return out;
}

Real topc_loss(Real ntxent, Real perm_ce, Real contrastive_weight, Real classification_weight) {
  if (!std::isfinite(ntxent) || !std::isfinite(perm_ce)) throw ValidationError("topc_loss: non-finite term");
  return contrastive_weight * ntxent + classification_weight * perm_ce;
}

}  // namespace tssl
