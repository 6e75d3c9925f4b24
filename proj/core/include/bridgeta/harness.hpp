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

#ifndef BRIDGETA_HARNESS_HPP_
#define BRIDGETA_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bridgeta/losses.hpp"
#include "bridgeta/metrics.hpp"
#include "bridgeta/models.hpp"
#include "bridgeta/scenegen.hpp"

namespace bridgeta {

enum class TrainMode { kTeacher, kBaseline, kBridgeta, kNoTa };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 6;
  double base_lr = 1e-4;
  LossWeights weights;
  LevelToggles toggles;
  TrainMode mode = TrainMode::kBridgeta;
  std::uint64_t seed = 1;
  std::int64_t channels = 16;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path teacher_checkpoint;  // distillation modes only
  bool ta_init_from_teacher = true;
  bool use_dice = false;
  bool ta_seg = false;

  std::string run_id() const;
  void validate() const;
};

/// Reads a JSON config; absent fields keep defaults. Mode, data/out dirs
/// and the teacher checkpoint come from the caller (CLI flags).
TrainConfig load_train_config(const std::filesystem::path& json_path);

/// BRIDGETA_SEED, when set, overrides the configured seed.
void apply_seed_env(TrainConfig& config);
void apply_seed_env(GenConfig& config);

struct RunResult {
  std::vector<MetricsRecord> metrics;
  std::filesystem::path checkpoint;     // trained teacher or student
  std::filesystem::path ta_checkpoint;  // bridgeta mode only
  double final_val_miou = 0.0;
};

/// Teacher pre-training: segmentation loss on the fused prediction, cosine
/// schedule, frozen + saved at the end.
RunResult train_teacher(const TrainConfig& config, const Dataset& data);

/// Camera-only baseline: identical network to the distilled student.
RunResult train_baseline(const TrainConfig& config, const Dataset& data);

/// Distillation (bridgeta or no_ta mode): frozen teacher from
/// config.teacher_checkpoint, student (+ TA) trained on the total loss.
RunResult distill(const TrainConfig& config, const Dataset& data);

RunResult run_training(const TrainConfig& config, const Dataset& data);

struct EvalResult {
  std::vector<double> iou;
  double miou = 0.0;
};

/// Split-level IoU: IoU_c = TP_c / (TP_c + FP_c + FN_c) with prediction =
/// logit > 0 (sigma > 0.5), counts accumulated over every added scene. An
/// empty union counts as IoU 1.
class IouAccumulator {
 public:
  explicit IouAccumulator(std::int64_t n_classes);
  void add(const Tensor& logits, const Tensor& labels);
  EvalResult result() const;

 private:
  std::vector<std::int64_t> tp_, fp_, fn_;
};

EvalResult evaluate_student(const StudentModel& student,
                            const std::vector<Scene>& scenes);

/// Loads a student checkpoint (shape-inferred) and evaluates it through
/// the plain camera-only path; distilled and baseline checkpoints take
/// exactly this route.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const Dataset& data, const std::string& split);

struct GapTriple {
  double feature = 0.0;
  double decoded = 0.0;
  double logit = 0.0;
};

/// Per-cell-mean squared teacher-student distance at the three levels:
/// fused vs camera feature, decoded vs decoded, logits vs logits.
GapTriple representation_gaps(const ForwardBundle& bundle);

/// Merges run directories into merged.csv plus comparison.json under
/// out_dir. Deterministic ordering and formatting; rerunning is
/// byte-identical.
void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir);

}  // namespace bridgeta

#endif  // BRIDGETA_HARNESS_HPP_
