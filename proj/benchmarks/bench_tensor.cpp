// Copyright 2026 The BridgeTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "bridgeta/rng.hpp"
#include "bridgeta/tensor.hpp"

namespace {

using namespace bridgeta;

Tensor random_tensor(Shape shape, Rng& rng) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  Rng rng(1);
  Tensor x = random_tensor({c, 32, 32}, rng);
  Tensor k = random_tensor({c, c, 3, 3}, rng);
  Tensor b = random_tensor({c}, rng);
  for (auto _ : state) {
    Tensor y = conv2d(x, k, b, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 9 * 32 * 32);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  Rng rng(1);
  Tensor x = random_tensor({c, 32, 32}, rng);
  Tensor k = random_tensor({c, c, 3, 3}, rng);
  Tensor b = random_tensor({c}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = sum_all(conv2d(x, k, b, 1));
    backward(loss);
    benchmark::DoNotOptimize(loss.value());
    x.zero_grad();
    k.zero_grad();
    b.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * 3 * c * c * 9 * 32 * 32);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16);

void BM_Sigmoid(benchmark::State& state) {
  Rng rng(1);
  Tensor x = random_tensor({16, 32, 32}, rng);
  for (auto _ : state) {
    Tensor y = sigmoid(x);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Sigmoid);

}  // namespace

BENCHMARK_MAIN();
