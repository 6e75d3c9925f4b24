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

#include "bridgeta/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "bridgeta/errors.hpp"
#include "bridgeta/nn.hpp"
#include "bridgeta/sha256.hpp"
#include "test_util.hpp"

using namespace bridgeta;
namespace fs = std::filesystem;

namespace {

struct MiniWorld {
  fs::path root;
  fs::path data_dir;
  fs::path teacher_dir;
  Dataset dataset;
};

// One small dataset + pre-trained teacher shared by the harness tests.
const MiniWorld& mini_world() {
  static MiniWorld* world = [] {
    setenv("BRIDGETA_FIXED_CLOCK", "1", 1);
    auto* w = new MiniWorld;
    w->root = testutil::fresh_temp_dir("bridgeta_harness");
    w->data_dir = w->root / "data";
    GenConfig gen;
    gen.height = 16;
    gen.width = 16;
    gen.train_scenes = 12;
    gen.val_scenes = 4;
    gen.seed = 5;
    generate_dataset(gen, w->data_dir);
    w->dataset = Dataset::load(w->data_dir);

    TrainConfig teacher;
    teacher.mode = TrainMode::kTeacher;
    teacher.epochs = 2;
    teacher.batch_size = 5;
    teacher.channels = 6;
    teacher.seed = 1;
    teacher.data_dir = w->data_dir;
    teacher.out_dir = w->teacher_dir = w->root / "teacher_s1";
    train_teacher(teacher, w->dataset);
    return w;
  }();
  return *world;
}

TrainConfig mini_config(TrainMode mode, std::uint64_t seed,
                        const fs::path& out_dir) {
  const MiniWorld& w = mini_world();
  TrainConfig c;
  c.mode = mode;
  c.epochs = 2;
  c.batch_size = 5;
  c.channels = 6;
  c.seed = seed;
  c.data_dir = w.data_dir;
  c.out_dir = out_dir;
  if (mode == TrainMode::kBridgeta || mode == TrainMode::kNoTa)
    c.teacher_checkpoint = w.teacher_dir / "teacher.ckpt";
  return c;
}

}  // namespace

TEST_CASE("IoU counting oracle cases") {
  // perfect prediction: IoU = 1
  {
    IouAccumulator acc(1);
    acc.add(Tensor::from_data({1, 2, 2}, {3, -3, 3, -3}),
            Tensor::from_data({1, 2, 2}, {1, 0, 1, 0}));
    CHECK(acc.result().iou[0] == 1.0);
  }
  // disjoint non-empty prediction and label: IoU = 0
  {
    IouAccumulator acc(1);
    acc.add(Tensor::from_data({1, 2, 2}, {3, -3, -3, -3}),
            Tensor::from_data({1, 2, 2}, {0, 1, 1, 0}));
    CHECK(acc.result().iou[0] == 0.0);
  }
  // pred mask 2 cells, label mask 2 cells, overlap 1:
  // TP=1, FP=1, FN=1 -> IoU = 1/3
  {
    IouAccumulator acc(1);
    acc.add(Tensor::from_data({1, 2, 2}, {3, 3, -3, -3}),
            Tensor::from_data({1, 2, 2}, {1, 0, 1, 0}));
    CHECK(acc.result().iou[0] == 1.0 / 3.0);
  }
  // accumulation across scenes and classes; empty union counts as 1
  {
    IouAccumulator acc(2);
    acc.add(Tensor::from_data({2, 1, 2}, {3, -3, -3, -3}),
            Tensor::from_data({2, 1, 2}, {1, 0, 0, 0}));
    acc.add(Tensor::from_data({2, 1, 2}, {-3, 3, -3, -3}),
            Tensor::from_data({2, 1, 2}, {0, 1, 0, 0}));
    EvalResult r = acc.result();
    CHECK(r.iou[0] == 1.0);
    CHECK(r.iou[1] == 1.0);  // never predicted, never labeled
    CHECK(r.miou == 1.0);
  }
}

TEST_CASE("evaluate_student oracle cases via crafted heads") {
  // Craft a 1-class student whose logits we can force through the bias.
  ModelConfig config;
  config.channels = 1;
  config.n_classes = 1;
  config.height = 16;
  config.width = 16;
  ParamRegistry reg;
  StudentModel student(config, reg, 3);
  for (const auto& entry : reg.entries()) {
    Tensor t = entry.tensor;
    for (double& v : t.mutable_data()) v = 0.0;
  }

  GenConfig gen;
  gen.height = 16;
  gen.width = 16;
  Scene scene = generate_scene(gen, 1);
  std::vector<Scene> scenes;
  scenes.push_back(Scene{scene.id, scene.night, scene.lidar, scene.camera,
                         Tensor::ones({1, 16, 16})});

  // all-positive prediction vs all-ones label: IoU = 1
  {
    Tensor bias = reg.get("student.head.bias");
    bias.mutable_data()[0] = 5.0;
    EvalResult r = evaluate_student(student, scenes);
    CHECK(r.iou[0] == 1.0);
    CHECK(r.miou == 1.0);
  }
  // all-positive prediction vs all-zero labels: disjoint, IoU = 0
  {
    scenes[0].labels = Tensor::zeros({1, 16, 16});
    EvalResult r = evaluate_student(student, scenes);
    CHECK(r.iou[0] == 0.0);
  }
}

TEST_CASE("training runs are bit-deterministic") {
  const MiniWorld& w = mini_world();
  TrainConfig a = mini_config(TrainMode::kTeacher, 9, w.root / "det_a");
  TrainConfig b = mini_config(TrainMode::kTeacher, 9, w.root / "det_b");
  RunResult ra = train_teacher(a, w.dataset);
  RunResult rb = train_teacher(b, w.dataset);
  CHECK(sha256_hex_of_file(ra.checkpoint) ==
        sha256_hex_of_file(rb.checkpoint));
  CHECK(sha256_hex_of_file(a.out_dir / "metrics.csv") ==
        sha256_hex_of_file(b.out_dir / "metrics.csv"));
}

TEST_CASE("teacher beats the all-zero predictor on the mini benchmark") {
  const MiniWorld& w = mini_world();
  // all-zero predictor: every class predicted empty -> IoU = 0 for present
  // classes. Any learning shows up as miou > that floor.
  auto metrics = read_metrics_csv(w.teacher_dir / "metrics.csv");
  const MetricsRecord& last = metrics.back();
  CHECK(last.split == "val");
  double zero_floor = 0.0;  // miou of empty predictions on non-empty classes
  CHECK(last.miou > zero_floor);
}

TEST_CASE("lambda zero distillation reproduces the baseline bit for bit") {
  const MiniWorld& w = mini_world();
  TrainConfig base = mini_config(TrainMode::kBaseline, 4, w.root / "base_s4");
  RunResult rb = train_baseline(base, w.dataset);

  TrainConfig zero = mini_config(TrainMode::kBridgeta, 4, w.root / "zero_s4");
  zero.weights = LossWeights{0.0, 0.0, 0.0};
  RunResult rz = distill(zero, w.dataset);

  ParamRegistry base_reg = load_checkpoint(rb.checkpoint);
  ParamRegistry zero_reg = load_checkpoint(rz.checkpoint);
  REQUIRE(base_reg.size() == zero_reg.size());
  for (std::size_t i = 0; i < base_reg.size(); ++i) {
    const auto& be = base_reg.entries()[i];
    const auto& ze = zero_reg.entries()[i];
    CHECK(be.name == ze.name);
    CHECK(testutil::to_vec(be.tensor.data()) ==
          testutil::to_vec(ze.tensor.data()));
  }
}

TEST_CASE("teacher parameters are bit-identical across distillation") {
  const MiniWorld& w = mini_world();
  const fs::path ckpt = w.teacher_dir / "teacher.ckpt";
  const std::string before = sha256_hex_of_file(ckpt);
  TrainConfig c = mini_config(TrainMode::kBridgeta, 6, w.root / "freeze_s6");
  RunResult r = distill(c, w.dataset);
  CHECK(sha256_hex_of_file(ckpt) == before);

  // and the loaded teacher registry was frozen all along -> reflected in
  // the run's metrics being finite and the distilled student loadable
  CHECK(std::isfinite(r.final_val_miou));
}

TEST_CASE("metrics rows, lr column and gap-bound invariant") {
  const MiniWorld& w = mini_world();
  TrainConfig c = mini_config(TrainMode::kBridgeta, 7, w.root / "rows_s7");
  RunResult r = distill(c, w.dataset);
  auto rows = read_metrics_csv(c.out_dir / "metrics.csv");
  CHECK(rows.size() == 4);  // 2 epochs x {train, val}

  CosineSchedule schedule{c.base_lr, c.epochs, 0.0};
  for (const auto& row : rows) {
    CHECK(row.lr == lr_at(schedule, row.epoch));
    // mIoU is the arithmetic mean of the per-class IoUs
    double mean = 0.0;
    for (double iou : row.iou) {
      mean += iou;
      CHECK(iou >= 0.0);
      CHECK(iou <= 1.0);
    }
    mean /= static_cast<double>(row.iou.size());
    CHECK(row.miou == doctest::Approx(mean).epsilon(1e-15));
    // recorded direct gap never exceeds the recorded weighted level loss
    CHECK(row.gap_feat <= row.loss_fld * (1 + 1e-12));
    CHECK(row.gap_dec <= row.loss_dld * (1 + 1e-12));
    CHECK(row.gap_logit <= row.loss_lld_base * (1 + 1e-12));
  }
  CHECK(r.metrics.size() == rows.size());
}

TEST_CASE("distilled student evaluates through the plain baseline path") {
  const MiniWorld& w = mini_world();
  TrainConfig c = mini_config(TrainMode::kBridgeta, 8, w.root / "eval_s8");
  RunResult r = distill(c, w.dataset);
  EvalResult via_plain_path = evaluate_checkpoint(r.checkpoint, w.dataset, "val");
  CHECK(via_plain_path.miou == doctest::Approx(r.final_val_miou).epsilon(1e-15));

  // a teacher checkpoint is rejected by the student evaluation path
  CHECK_THROWS_AS(
      evaluate_checkpoint(w.teacher_dir / "teacher.ckpt", w.dataset, "val"),
      FormatError);
}

TEST_CASE("report merges runs and its delta matches hand arithmetic") {
  const MiniWorld& w = mini_world();
  TrainConfig base = mini_config(TrainMode::kBaseline, 11, w.root / "rep_base");
  TrainConfig bri = mini_config(TrainMode::kBridgeta, 11, w.root / "rep_bri");
  train_baseline(base, w.dataset);
  distill(bri, w.dataset);

  const fs::path report_dir = w.root / "report";
  std::vector<fs::path> dirs{base.out_dir, bri.out_dir, w.teacher_dir};
  write_report(dirs, report_dir);

  auto merged = read_metrics_csv(report_dir / "merged.csv");
  CHECK(merged.size() == 12);  // 3 runs x 2 epochs x 2 splits

  // delta check by hand from the CSV
  double base_final = -1, bri_final = -1;
  for (const auto& row : merged) {
    if (row.split != "val" || row.epoch != 1) continue;
    if (row.mode == "baseline") base_final = row.miou;
    if (row.mode == "bridgeta") bri_final = row.miou;
  }
  REQUIRE(base_final >= 0.0);
  REQUIRE(bri_final >= 0.0);
  // delta recomputed by hand from the CSV equals the reported one exactly
  std::ifstream in(report_dir / "comparison.json");
  const nlohmann::json comparison = nlohmann::json::parse(in);
  CHECK(comparison.at("deltas").at("bridgeta_minus_baseline").get<double>() ==
        bri_final - base_final);

  // rerunning the report is byte-identical
  const std::string merged_hash = sha256_hex_of_file(report_dir / "merged.csv");
  const std::string cmp_hash =
      sha256_hex_of_file(report_dir / "comparison.json");
  write_report(dirs, report_dir);
  CHECK(sha256_hex_of_file(report_dir / "merged.csv") == merged_hash);
  CHECK(sha256_hex_of_file(report_dir / "comparison.json") == cmp_hash);
}

TEST_CASE("BRIDGETA_SEED overrides the configured seed") {
  TrainConfig c;
  c.seed = 3;
  setenv("BRIDGETA_SEED", "99", 1);
  apply_seed_env(c);
  unsetenv("BRIDGETA_SEED");
  CHECK(c.seed == 99);

  GenConfig g;
  g.seed = 3;
  setenv("BRIDGETA_SEED", "123", 1);
  apply_seed_env(g);
  unsetenv("BRIDGETA_SEED");
  CHECK(g.seed == 123);
}

TEST_CASE("distill requires a teacher checkpoint") {
  const MiniWorld& w = mini_world();
  TrainConfig c = mini_config(TrainMode::kBridgeta, 12, w.root / "noteacher");
  c.teacher_checkpoint = w.root / "missing.ckpt";
  CHECK_THROWS_AS(distill(c, w.dataset), InvalidArgument);
}
