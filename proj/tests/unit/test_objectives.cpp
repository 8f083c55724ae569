// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "tssl/objectives.hpp"
#include "tssl/permutation.hpp"

using namespace tssl;

namespace {

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.dim(0));
  for (int r = 0; r < t.dim(0); ++r) out[r].assign(t.ptr() + r * t.dim(1), t.ptr() + (r + 1) * t.dim(1));
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("uninformative predictions cost ln2, ln6 and ln24") {
  CHECK(bce_loss(1, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const Tensor zero({3, 1});
  const std::vector<int> labels{1, 0, 1};
  CHECK(std::abs(bce_with_logits(zero, labels).loss - std::log(2.0)) < 1e-6);
  for (int n = 2; n <= 4; ++n) {
    const Tensor logits({5, factorial(n)});
    std::vector<int> targets{0, 1, factorial(n) - 1, 1, 0};
    CHECK(std::abs(cross_entropy(logits, targets).loss - std::log(static_cast<double>(factorial(n)))) < 1e-6);
  }
}

TEST_CASE("bce clamps probabilities") {
  CHECK(std::isfinite(bce_loss(1, 0.0)));
  CHECK(bce_loss(1, 0.0) == doctest::Approx(-std::log(kProbabilityEps)));
  CHECK(bce_loss(0, 1.0) == doctest::Approx(-std::log(kProbabilityEps)));
  CHECK_THROWS_AS(bce_loss(2, 0.5), ValidationError);
  const Tensor huge({1}, 80.0);
  const std::vector<int> zero{0};
  CHECK(std::isfinite(bce_with_logits(huge, zero).loss));
}

TEST_CASE("cross-entropy and bce gradients match finite differences") {
  std::mt19937_64 rng(3);
  Tensor logits = test::random_tensor({4, 6}, rng);
  const std::vector<int> targets{0, 5, 2, 3};
  const LossGrad g = cross_entropy(logits, targets);
  Tensor blogits = test::random_tensor({4}, rng);
  const std::vector<int> labels{1, 0, 0, 1};
  const LossGrad bg = bce_with_logits(blogits, labels);
  const double h = 1e-5;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double keep = logits[i];
    logits[i] = keep + h;
    const double up = cross_entropy(logits, targets).loss;
    logits[i] = keep - h;
    const double down = cross_entropy(logits, targets).loss;
    logits[i] = keep;
    CHECK(g.grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < blogits.size(); ++i) {
    const double keep = blogits[i];
    blogits[i] = keep + h;
    const double up = bce_with_logits(blogits, labels).loss;
    blogits[i] = keep - h;
    const double down = bce_with_logits(blogits, labels).loss;
    blogits[i] = keep;
    CHECK(bg.grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("nt-xent hand case") {
  ContrastiveBatch batch{Tensor({2, 2}), Tensor({2, 2}), 1.0};
  batch.z_i[0] = batch.z_j[0] = 1.0;
  batch.z_i[3] = batch.z_j[3] = 1.0;
  const double per_anchor = std::log((std::exp(1.0) + 2.0) / std::exp(1.0));
  CHECK(per_anchor == doctest::Approx(0.5514).epsilon(1e-4));
  const NtXentResult r = ntxent_loss(batch);
  CHECK(r.loss == doctest::Approx(2 * per_anchor).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(1.1029).epsilon(1e-4));
}

TEST_CASE("nt-xent matches the double-loop oracle on 50 random batches") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> bdist(2, 8), ddist(2, 16);
  std::uniform_real_distribution<double> tdist(0.1, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int b = bdist(rng), d = ddist(rng);
    ContrastiveBatch batch{test::random_tensor({b, d}, rng), test::random_tensor({b, d}, rng), tdist(rng)};
    for (bool same : {false, true}) {
      const double got = ntxent_loss(batch, same ? NegativeSet::SameView : NegativeSet::BothViews).loss;
      const double want = oracle::ntxent(rows_of(batch.z_i), rows_of(batch.z_j), batch.temperature, same);
      CHECK(rel(got, want) < 1e-6);
    }
  }
}

TEST_CASE("nt-xent gradient matches finite differences") {
  std::mt19937_64 rng(23);
  for (NegativeSet neg : {NegativeSet::BothViews, NegativeSet::SameView}) {
    ContrastiveBatch batch{test::random_tensor({3, 4}, rng), test::random_tensor({3, 4}, rng), 0.5};
    const NtXentResult r = ntxent_loss(batch, neg);
    const double h = 1e-6;
    for (Tensor* t : {&batch.z_i, &batch.z_j}) {
      const Tensor& g = t == &batch.z_i ? r.grad_i : r.grad_j;
      for (std::size_t i = 0; i < t->size(); ++i) {
        const double keep = (*t)[i];
        (*t)[i] = keep + h;
        const double up = ntxent_loss(batch, neg).loss;
        (*t)[i] = keep - h;
        const double down = ntxent_loss(batch, neg).loss;
        (*t)[i] = keep;
        CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("nt-xent rejects degenerate batches") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(ntxent_loss({test::random_tensor({1, 3}, rng), test::random_tensor({1, 3}, rng), 0.5}),
                  ValidationError);
  CHECK_THROWS_AS(ntxent_loss({Tensor({2, 3}), Tensor({2, 3}), 0.5}), ValidationError);
  CHECK_THROWS_AS(ntxent_loss({test::random_tensor({2, 3}, rng), test::random_tensor({2, 3}, rng), 0.0}),
                  ValidationError);
}

TEST_CASE("combined loss is the weighted sum") {
  CHECK(topc_loss(1.5, 0.5) == doctest::Approx(2.0));
  CHECK(topc_loss(1.5, 0.5, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(topc_loss(1.5, 0.5, 2.0, 0.5) == doctest::Approx(3.25));
  CHECK_THROWS_AS(topc_loss(NAN, 1.0), ValidationError);
}
