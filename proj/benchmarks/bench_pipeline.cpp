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

#include "bridgeta/losses.hpp"
#include "bridgeta/models.hpp"
#include "bridgeta/nn.hpp"
#include "bridgeta/rng.hpp"
#include "bridgeta/scenegen.hpp"

namespace {

using namespace bridgeta;

void BM_GenerateScene(benchmark::State& state) {
  GenConfig config;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Scene scene = generate_scene(config, seed++);
    benchmark::DoNotOptimize(scene.camera.data().data());
  }
}
BENCHMARK(BM_GenerateScene);

void BM_DualPathLoss(benchmark::State& state) {
  Rng rng(1);
  auto feat = [&] {
    std::vector<double> v(16 * 32 * 32);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return Tensor::from_data({16, 32, 32}, std::move(v));
  };
  Tensor r_s = feat(), r_ta = feat(), r_t = feat();
  for (auto _ : state) {
    DualPathTerms terms = dual_path_mse(r_s, r_ta, r_t);
    benchmark::DoNotOptimize(terms.weighted_total.value());
  }
}
BENCHMARK(BM_DualPathLoss);

void BM_DistillStep(benchmark::State& state) {
  ModelConfig config;  // full-size defaults
  ParamRegistry teacher_reg, trainable;
  TeacherModel teacher(config, teacher_reg, 1);
  teacher_reg.freeze_all();
  StudentModel student(config, trainable, 2);
  TAModule ta(config, trainable, 3);

  GenConfig gen;
  Scene scene = generate_scene(gen, 7);
  AdamState adam;
  for (auto _ : state) {
    Tape tape;
    ForwardBundle bundle = full_distill_forward(&teacher, &ta, student,
                                                scene.lidar, scene.camera);
    LossBreakdown out = total_loss(bundle, scene.labels, {});
    trainable.ensure_grad_buffers();
    backward(out.total);
    adam_step(trainable, adam, 1e-4);
    benchmark::DoNotOptimize(out.total.value());
  }
}
BENCHMARK(BM_DistillStep);

}  // namespace

BENCHMARK_MAIN();
