// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "tssl/permutation.hpp"

using namespace tssl;

TEST_CASE("rank matches lexicographic enumeration for every n") {
  for (int n = 2; n <= 4; ++n) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    int expected = 0;
    do {
      CHECK(permutation_to_index(order) == expected);
      CHECK(index_to_permutation(n, expected) == order);
      ++expected;
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(expected == factorial(n));
  }
}

TEST_CASE("round trip over all 2 + 6 + 24 permutations") {
  int total = 0;
  for (int n = 2; n <= 4; ++n) {
    std::set<std::vector<int>> seen;
    for (int c = 0; c < factorial(n); ++c) {
      const Permutation p = Permutation::from_index(n, c);
      CHECK(p.class_index() == c);
      CHECK(Permutation(p.order()) == p);
      seen.insert(p.order());
      ++total;
    }
    CHECK(seen.size() == static_cast<std::size_t>(factorial(n)));
  }
  CHECK(total == 32);
}

TEST_CASE("known ranks") {
  CHECK(permutation_to_index(std::vector<int>{0, 1, 2}) == 0);
  CHECK(permutation_to_index(std::vector<int>{2, 0, 1}) == 4);
  CHECK(permutation_to_index(std::vector<int>{3, 2, 1, 0}) == 23);
  CHECK(permutation_to_index(std::vector<int>{1, 0}) == 1);
  CHECK(Permutation::identity(4).is_identity());
}

TEST_CASE("apply then inverse is the identity") {
  const std::vector<std::string> seq{"a", "b", "c", "d"};
  for (int n = 2; n <= 4; ++n) {
    const std::vector<std::string> input(seq.begin(), seq.begin() + n);
    for (int c = 0; c < factorial(n); ++c) {
      const Permutation p = Permutation::from_index(n, c);
      const auto shuffled = apply_permutation(input, p);
      CHECK(apply_permutation(shuffled, p.inverse()) == input);
      for (int k = 0; k < n; ++k) CHECK(shuffled[k] == input[p.order()[k]]);
    }
  }
}

TEST_CASE("invalid permutations are rejected") {
  CHECK_THROWS_AS(Permutation(std::vector<int>{0}), ValidationError);
  CHECK_THROWS_AS(Permutation(std::vector<int>{0, 1, 2, 3, 4}), ValidationError);
  CHECK_THROWS_AS(Permutation(std::vector<int>{0, 0, 1}), ValidationError);
  CHECK_THROWS_AS(Permutation(std::vector<int>{0, 3, 1}), ValidationError);
  CHECK_THROWS_AS(Permutation(std::vector<int>{-1, 0}), ValidationError);
  CHECK_THROWS_AS(Permutation::from_index(3, 6), ValidationError);
  CHECK_THROWS_AS(Permutation::from_index(3, -1), ValidationError);
  const std::vector<int> values{1, 2, 3};
  CHECK_THROWS_AS(apply_permutation(std::span<const int>(values), std::span<const int>(std::vector<int>{0, 1})),
                  ValidationError);
}
