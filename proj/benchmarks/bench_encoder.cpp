// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "tssl/nets.hpp"

namespace {

tssl::EncoderConfig encoder(int edge, double width) {
  tssl::EncoderConfig c;
  c.architecture = "resnet18";
  c.width_multiplier = width;
  c.stem_kernel = 3;
  c.input_shape = {edge, edge, edge};
  return c;
}

tssl::Tensor batch(int n, int edge) {
  tssl::Tensor x({n, 1, edge, edge, edge});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = normal(rng);
  return x;
}

// args: batch size, edge length
void BM_EncoderForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), edge = static_cast<int>(state.range(1));
  tssl::Network net(tssl::Method::TOP, encoder(edge, 0.125), tssl::HeadConfig{{64, 32}, 32}, 1);
  const tssl::Tensor x = batch(n, edge);
  for (auto _ : state) benchmark::DoNotOptimize(net.encoder().forward(x, tssl::Mode::Eval));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncoderForward)->Args({8, 32})->Args({16, 32})->Unit(benchmark::kMillisecond);

void BM_EncoderForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), edge = static_cast<int>(state.range(1));
  tssl::Network net(tssl::Method::TOP, encoder(edge, 0.125), tssl::HeadConfig{{64, 32}, 32}, 1);
  const tssl::Tensor x = batch(n, edge);
  for (auto _ : state) {
    net.zero_grad();
    const tssl::Tensor f = net.encoder().forward(x, tssl::Mode::Train);
    net.encoder().backward(tssl::Tensor(f.shape(), 1.0));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncoderForwardBackward)->Args({8, 32})->Args({16, 32})->Unit(benchmark::kMillisecond);

}  // namespace
