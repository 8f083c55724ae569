// SPDX-License-Identifier: Apache-2.0
//
// Loss functions with analytic gradients. Batch losses are means over the
// batch; gradients are of that mean.

#pragma once

#include <span>
#include <string_view>

#include "tssl/tensor.hpp"

namespace tssl {

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr Real kProbabilityEps = 1e-7;

struct LossGrad {
  Real loss = 0.0;
  Tensor grad;
};

/// -[y log p + (1 - y) log(1 - p)] for one sample.
Real bce_loss(int label, Real probability, Real eps = kProbabilityEps);
/// Mean binary cross-entropy over logits [N] or [N, 1]; gradient w.r.t. the logits.
LossGrad bce_with_logits(const Tensor& logits, std::span<const int> labels, Real eps = kProbabilityEps);

/// -log softmax(logits)[target].
Real perm_ce_loss(std::span<const Real> logits, int target);
/// Mean categorical cross-entropy over logits [B, C]; gradient w.r.t. the logits.
LossGrad cross_entropy(const Tensor& logits, std::span<const int> targets);

enum class NegativeSet {
  /// All 2B - 1 other projections of both views.
  BothViews,
  /// The positive plus the anchor's own view, self excluded.
  SameView,
};
std::string_view to_string(NegativeSet s);
NegativeSet parse_negative_set(std::string_view text);

/// Paired projections: row b of z_i and row b of z_j are two views of one
/// sequence's first timepoint.
struct ContrastiveBatch {
  Tensor z_i;  // [B, d]
  Tensor z_j;  // [B, d]
  Real temperature = 0.5;
};

struct NtXentResult {
  Real loss = 0.0;
  Tensor grad_i;
  Tensor grad_j;
};

/// Cosine-similarity NT-Xent, summed over both anchor directions of each
/// pair and averaged over the B pairs.
NtXentResult ntxent_loss(const ContrastiveBatch& batch, NegativeSet negatives = NegativeSet::BothViews);

Real topc_loss(Real ntxent, Real perm_ce, Real contrastive_weight = 1.0, Real classification_weight = 1.0);

}  // namespace tssl
