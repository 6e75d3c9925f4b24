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

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "bridgeta/harness.hpp"
#include "bridgeta/metrics.hpp"
#include "bridgeta/scenegen.hpp"
#include "bridgeta/version.hpp"

namespace {

using bridgeta::TrainConfig;
using bridgeta::TrainMode;
using json = nlohmann::ordered_json;

struct TrainFlags {
  std::string data_dir;
  std::string out_dir;
  std::string config_path;
  std::int64_t seed = -1;
  int epochs = -1;
  int batch_size = -1;
  double lr = -1.0;
  std::int64_t channels = -1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--data", flags.data_dir, "dataset directory")->required();
  cmd->add_option("--out", flags.out_dir, "output run directory")->required();
  cmd->add_option("--config", flags.config_path, "JSON training config");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--epochs", flags.epochs, "training epochs");
  cmd->add_option("--batch-size", flags.batch_size, "scenes per batch");
  cmd->add_option("--lr", flags.lr, "base learning rate");
  cmd->add_option("--channels", flags.channels, "feature channels");
}

TrainConfig resolve_config(const TrainFlags& flags, TrainMode mode) {
  TrainConfig config;
  if (!flags.config_path.empty())
    config = bridgeta::load_train_config(flags.config_path);
  config.mode = mode;
  config.data_dir = flags.data_dir;
  config.out_dir = flags.out_dir;
  if (flags.seed >= 0) config.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.epochs > 0) config.epochs = flags.epochs;
  if (flags.batch_size > 0) config.batch_size = flags.batch_size;
  if (flags.lr > 0) config.base_lr = flags.lr;
  if (flags.channels > 0) config.channels = flags.channels;
  bridgeta::apply_seed_env(config);
  return config;
}

int run_training_command(const TrainConfig& config) {
  bridgeta::Dataset data = bridgeta::Dataset::load(config.data_dir);
  bridgeta::RunResult result = bridgeta::run_training(config, data);
  json summary;
  summary["run_id"] = config.run_id();
  summary["mode"] = bridgeta::to_string(config.mode);
  summary["final_val_miou"] = result.final_val_miou;
  summary["checkpoint"] = result.checkpoint.string();
  if (!result.ta_checkpoint.empty())
    summary["ta_checkpoint"] = result.ta_checkpoint.string();
  summary["metrics"] = (config.out_dir / "metrics.csv").string();
  std::printf("%s\n", summary.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Teacher-assistant knowledge distillation on a synthetic multimodal "
      "BEV segmentation benchmark"};
  app.set_version_flag("--version", bridgeta::kVersionString);
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_config_path, gen_out;
  gen->add_option("--config", gen_config_path, "JSON generator config");
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // training modes
  TrainFlags teacher_flags, baseline_flags, distill_flags;
  auto* teacher = app.add_subcommand("train-teacher",
                                     "pre-train the fusion teacher");
  add_train_flags(teacher, teacher_flags);
  auto* baseline = app.add_subcommand("train-baseline",
                                      "train the camera-only baseline");
  add_train_flags(baseline, baseline_flags);
  auto* distill = app.add_subcommand(
      "distill", "distill the student from a frozen teacher");
  add_train_flags(distill, distill_flags);
  std::string teacher_ckpt, levels = "fld,dld,lld";
  bool no_ta = false, no_aux = false, ta_random_init = false, dice = false,
       ta_seg = false;
  double lambda1 = -1, lambda2 = -1, lambda3 = -1;
  distill->add_option("--teacher", teacher_ckpt, "teacher checkpoint path")
      ->required();
  distill->add_flag("--no-ta", no_ta,
                    "direct teacher-student distillation (ablation)");
  distill->add_option("--levels", levels,
                      "enabled levels, comma list from {fld,dld,lld}");
  distill->add_flag("--no-aux", no_aux, "disable the auxiliary KL term");
  distill->add_option("--lambda1", lambda1, "feature-level weight");
  distill->add_option("--lambda2", lambda2, "decoded-level weight");
  distill->add_option("--lambda3", lambda3, "logit-level weight");
  distill->add_flag("--ta-random-init", ta_random_init,
                    "random TA init instead of copying the teacher");
  distill->add_flag("--dice", dice, "add soft-Dice to the segmentation loss");
  distill->add_flag("--ta-seg", ta_seg,
                    "experimental: segmentation supervision on the TA");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a student checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "val";
  eval->add_option("--ckpt", eval_ckpt, "student checkpoint")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "split name (train|val)");

  // report
  auto* report = app.add_subcommand("report", "merge runs into a report");
  std::vector<std::string> report_runs;
  std::string report_out;
  report->add_option("--runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "report output directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      bridgeta::GenConfig config;
      if (!gen_config_path.empty())
        config = bridgeta::load_gen_config(gen_config_path);
      bridgeta::apply_seed_env(config);
      bridgeta::DatasetSummary summary =
          bridgeta::generate_dataset(config, gen_out);
      json j;
      j["out"] = gen_out;
      j["train_scenes"] = summary.train_count;
      j["val_scenes"] = summary.val_count;
      j["class_positive_rates"] = summary.class_positive_rates;
      j["train_sha256"] = summary.train_sha256;
      j["val_sha256"] = summary.val_sha256;
      std::printf("%s\n", j.dump(2).c_str());
      return 0;
    }
    if (*teacher)
      return run_training_command(
          resolve_config(teacher_flags, TrainMode::kTeacher));
    if (*baseline)
      return run_training_command(
          resolve_config(baseline_flags, TrainMode::kBaseline));
    if (*distill) {
      TrainConfig config = resolve_config(
          distill_flags, no_ta ? TrainMode::kNoTa : TrainMode::kBridgeta);
      config.teacher_checkpoint = teacher_ckpt;
      config.toggles.fld = levels.find("fld") != std::string::npos;
      config.toggles.dld = levels.find("dld") != std::string::npos;
      config.toggles.lld_base = levels.find("lld") != std::string::npos;
      config.toggles.lld_aux = config.toggles.lld_base && !no_aux;
      if (lambda1 >= 0) config.weights.lambda1 = lambda1;
      if (lambda2 >= 0) config.weights.lambda2 = lambda2;
      if (lambda3 >= 0) config.weights.lambda3 = lambda3;
      if (ta_random_init) config.ta_init_from_teacher = false;
      if (dice) config.use_dice = true;
      if (ta_seg) config.ta_seg = true;
      return run_training_command(config);
    }
    if (*eval) {
      bridgeta::Dataset data = bridgeta::Dataset::load(eval_data);
      bridgeta::EvalResult result =
          bridgeta::evaluate_checkpoint(eval_ckpt, data, eval_split);
      json j;
      j["checkpoint"] = eval_ckpt;
      j["split"] = eval_split;
      j["iou"] = result.iou;
      j["miou"] = result.miou;
      std::printf("%s\n", j.dump(2).c_str());
      return 0;
    }
    if (*report) {
      std::vector<std::filesystem::path> dirs(report_runs.begin(),
                                              report_runs.end());
      bridgeta::write_report(dirs, report_out);
      std::printf("report written to %s\n", report_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
