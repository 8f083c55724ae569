// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tssl/data_model.hpp"

namespace tssl {

/// Reordering of sequence positions together with its lexicographic rank
/// among all n! orderings of {0..n-1}.
class Permutation {
 public:
  /// Throws ValidationError unless `order` is a bijection on {0..n-1}, n in [2, 4].
  explicit Permutation(std::vector<int> order);
  static Permutation from_index(int n, int class_index);
  static Permutation identity(int n);

  [[nodiscard]] const std::vector<int>& order() const { return order_; }
  [[nodiscard]] int n() const { return static_cast<int>(order_.size()); }
  [[nodiscard]] int class_index() const { return class_index_; }
  [[nodiscard]] bool is_identity() const { return class_index_ == 0; }
  [[nodiscard]] Permutation inverse() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> order_;
  int class_index_ = 0;
};

int factorial(int n);

/// Lexicographic (Lehmer-code) rank of `order`.
int permutation_to_index(std::span<const int> order);
std::vector<int> index_to_permutation(int n, int class_index);

/// output[k] = input[order[k]].
template <typename T>
std::vector<T> apply_permutation(std::span<const T> input, std::span<const int> order) {
  if (input.size() != order.size()) {
    throw ValidationError("apply_permutation: length mismatch");
  }
  std::vector<bool> seen(order.size(), false);
  for (int p : order) {
    if (p < 0 || static_cast<std::size_t>(p) >= order.size() || seen[p]) {
      throw ValidationError("apply_permutation: order is not a bijection");
    }
    seen[p] = true;
  }
  std::vector<T> out;
  out.reserve(input.size());
  for (int p : order) out.push_back(input[p]);
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& input, const Permutation& perm) {
  return apply_permutation(std::span<const T>(input), std::span<const int>(perm.order()));
}

}  // namespace tssl
