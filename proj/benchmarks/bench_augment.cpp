// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "tssl/augment.hpp"

namespace {

tssl::Volume phantom(int edge) {
  std::vector<float> data(static_cast<std::size_t>(edge) * edge * edge);
  tssl::Rng rng(4);
  std::normal_distribution<float> normal(1.0f, 0.05f);
  for (float& v : data) v = normal(rng);
  return tssl::Volume({edge, edge, edge}, std::move(data));
}

void BM_PretrainAugment(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<tssl::Volume> seq(n, phantom(32));
  tssl::AugmentParams params;
  params.per_transform_prob = 1.0;
  tssl::Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(tssl::pretrain_augment(seq, params, rng));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PretrainAugment)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_DownstreamAugment(benchmark::State& state) {
  const tssl::Volume vol = phantom(32);
  const tssl::DownstreamAugmentParams params;
  tssl::Rng rng(6);
  for (auto _ : state) benchmark::DoNotOptimize(tssl::downstream_augment(vol, params, rng));
}
BENCHMARK(BM_DownstreamAugment)->Unit(benchmark::kMillisecond);

void BM_GaussianSmooth(benchmark::State& state) {
  const tssl::Volume vol = phantom(32);
  for (auto _ : state) benchmark::DoNotOptimize(tssl::gaussian_smooth(vol, {1.0, 1.0, 1.0}));
}
BENCHMARK(BM_GaussianSmooth)->Unit(benchmark::kMillisecond);

}  // namespace
