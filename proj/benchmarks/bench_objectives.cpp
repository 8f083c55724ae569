// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "tssl/objectives.hpp"

namespace {

tssl::Tensor random(int rows, int cols, std::mt19937_64& rng) {
  tssl::Tensor t({rows, cols});
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
  return t;
}

void BM_NtXent(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const int b = static_cast<int>(state.range(0));
  const tssl::ContrastiveBatch batch{random(b, 128, rng), random(b, 128, rng), 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(tssl::ntxent_loss(batch));
}
BENCHMARK(BM_NtXent)->Arg(8)->Arg(64)->Arg(256);

void BM_PermutationCrossEntropy(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const tssl::Tensor logits = random(64, 24, rng);
  std::vector<int> targets(64);
  for (int i = 0; i < 64; ++i) targets[i] = i % 24;
  for (auto _ : state) benchmark::DoNotOptimize(tssl::cross_entropy(logits, targets));
}
BENCHMARK(BM_PermutationCrossEntropy);

}  // namespace
