// SPDX-License-Identifier: Apache-2.0

#include "tssl/permutation.hpp"

#include <numeric>
#include <string>

namespace tssl {

namespace {

void check_length(int n) {
  if (n < kMinSequenceLength || n > kMaxSequenceLength) {
    throw ValidationError("permutation length must be in [2, 4], got " + std::to_string(n));
  }
}

void check_bijection(std::span<const int> order) {
  check_length(static_cast<int>(order.size()));
  std::vector<bool> seen(order.size(), false);
  for (int p : order) {
    if (p < 0 || static_cast<std::size_t>(p) >= order.size() || seen[p]) {
      throw ValidationError("permutation order is not a bijection");
    }
    seen[p] = true;
  }
}

}  // namespace

int factorial(int n) {
  int f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

int permutation_to_index(std::span<const int> order) {
  check_bijection(order);
  const int n = static_cast<int>(order.size());
  int rank = 0;
  for (int i = 0; i < n; ++i) {
    int smaller_after = 0;
    for (int j = i + 1; j < n; ++j) {
      if (order[j] < order[i]) ++smaller_after;
    }
    rank += smaller_after * factorial(n - 1 - i);
  }
  return rank;
}

std::vector<int> index_to_permutation(int n, int class_index) {
  check_length(n);
  if (class_index < 0 || class_index >= factorial(n)) {
    throw ValidationError("permutation index " + std::to_string(class_index) +
                          " out of range for n=" + std::to_string(n));
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> order;
  order.reserve(n);
  int rest = class_index;
  for (int i = n - 1; i >= 0; --i) {
    const int f = factorial(i);
    const int digit = rest / f;
    rest %= f;
    order.push_back(pool[digit]);
    pool.erase(pool.begin() + digit);
  }
  return order;
}

Permutation::Permutation(std::vector<int> order) : order_(std::move(order)) {
  class_index_ = permutation_to_index(order_);
}

Permutation Permutation::from_index(int n, int class_index) {
  return Permutation(index_to_permutation(n, class_index));
}

Permutation Permutation::identity(int n) { return from_index(n, 0); }

Permutation Permutation::inverse() const {
  std::vector<int> inv(order_.size());
  for (std::size_t k = 0; k < order_.size(); ++k) inv[order_[k]] = static_cast<int>(k);
  return Permutation(std::move(inv));
}

}  // namespace tssl
