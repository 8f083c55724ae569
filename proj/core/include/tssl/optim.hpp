// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tssl/tensor.hpp"

namespace tssl {

struct ParamGroup {
  std::vector<Parameter*> params;
  Real learning_rate = 1e-4;
};

enum class OptimizerKind { Adam, Sgd };
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

/// Adam (or plain SGD) over parameter groups with per-group learning rates.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<ParamGroup> groups);

  void step();
  void zero_grad();
  [[nodiscard]] long steps() const { return t_; }

  static constexpr Real kBeta1 = 0.9;
  static constexpr Real kBeta2 = 0.999;
  static constexpr Real kEps = 1e-8;

 private:
  OptimizerKind kind_;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<Tensor>> m_, v_;
  long t_ = 0;
};

}  // namespace tssl
