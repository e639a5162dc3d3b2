// benchmarks/bench_main.cpp

// Copyright 2026  The nvl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Micro benchmarks of the hot paths: dense products, the recurrent
// enhancer, the embedder and feature extraction.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "nvl/dsp.hpp"
#include "nvl/losses.hpp"
#include "nvl/models.hpp"
#include "nvl/tensor.hpp"

namespace {

using namespace nvl;

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({n, n}, 1, true), b = random_tensor({n, n}, 2, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    sum(matmul(a, b)).backward();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

void BM_EnhancerMask(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const Enhancer enh(EnhancerConfig{2, 32}, 3);
  const Tensor x = random_tensor({frames, kMelBins}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(enh.mask(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames));
}
BENCHMARK(BM_EnhancerMask)->Arg(100)->Arg(300);

void BM_EnhancerTrainStep(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  Enhancer enh(EnhancerConfig{2, 32}, 3);
  const Tensor x = random_tensor({frames, kMelBins}, 4);
  for (auto _ : state) {
    for (auto& p : enh.parameters()) p.value.zero_grad();
    sum(enh.mask(x)).backward();
  }
}
BENCHMARK(BM_EnhancerTrainStep)->Arg(100);

void BM_EmbedderForward(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const Embedder emb(EmbedderConfig{64, 128, 64, 64, 20}, 5);
  const Tensor x = random_tensor({frames, kMelBins}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(emb.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames));
}
BENCHMARK(BM_EmbedderForward)->Arg(100)->Arg(300);

void BM_LogMel(benchmark::State& state) {
  const auto seconds = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(seconds * kSampleRate);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 0.1);
  for (double& s : x) s = g(rng);
  const Waveform w(std::move(x));
  for (auto _ : state) benchmark::DoNotOptimize(logmel(w));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.size()));
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(5);

}  // namespace

BENCHMARK_MAIN();
