// SPDX-License-Identifier: Apache-2.0

#include "tssl/optim.hpp"

#include <cmath>

#include "tssl/data_model.hpp"

namespace tssl {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "sgd") return OptimizerKind::Sgd;
  throw ValidationError("unknown optimizer '" + std::string(text) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, std::vector<ParamGroup> groups) : kind_(kind), groups_(std::move(groups)) {
  for (const auto& g : groups_) {
    if (g.learning_rate < 0.0) throw ValidationError("learning rate must be non-negative");
    std::vector<Tensor> m, v;
    for (const Parameter* p : g.params) {
      m.push_back(p->value.zeros_like());
      v.push_back(p->value.zeros_like());
    }
    m_.push_back(std::move(m));
    v_.push_back(std::move(v));
  }
}

void Optimizer::zero_grad() {
  for (auto& g : groups_)
    for (Parameter* p : g.params) p->zero_grad();
}

void Optimizer::step() {
  ++t_;
  const Real bc1 = 1.0 - std::pow(kBeta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(kBeta2, static_cast<Real>(t_));
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const Real lr = groups_[gi].learning_rate;
    if (lr == 0.0) continue;
    for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
      Parameter& p = *groups_[gi].params[pi];
      if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
        continue;
      }
      Tensor& m = m_[gi][pi];
      Tensor& v = v_[gi][pi];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const Real g = p.grad[i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
      }
    }
  }
}

}  // namespace tssl
