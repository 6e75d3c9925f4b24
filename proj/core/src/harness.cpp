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

#include <chrono>
#include <cstdlib>
#include <json.hpp>
#include <optional>

#include "bridgeta/errors.hpp"
#include "bridgeta/nn.hpp"
#include "bridgeta/version.hpp"
#include "wire.hpp"

namespace bridgeta {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

bool fixed_clock() {
  const char* v = std::getenv("BRIDGETA_FIXED_CLOCK");
  return v != nullptr && v[0] != '\0' && v[0] != '0';
}

double elapsed_seconds(Clock::time_point start) {
  if (fixed_clock()) return 0.0;
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Per-scene evaluation
// ---------------------------------------------------------------------------

struct SceneEval {
  Tensor total;  // scalar, differentiable in training mode
  double seg = 0, fld = 0, dld = 0, lld_base = 0, lld_aux = 0, total_v = 0;
  GapTriple gaps;
  Tensor pred_logits;
};

struct Accumulator {
  double seg = 0, fld = 0, dld = 0, lld_base = 0, lld_aux = 0, total = 0;
  GapTriple gaps;
  std::int64_t count = 0;

  void add(const SceneEval& e) {
    seg += e.seg;
    fld += e.fld;
    dld += e.dld;
    lld_base += e.lld_base;
    lld_aux += e.lld_aux;
    total += e.total_v;
    gaps.feature += e.gaps.feature;
    gaps.decoded += e.gaps.decoded;
    gaps.logit += e.gaps.logit;
    ++count;
  }

  void fill(MetricsRecord& r) const {
    const double inv = count > 0 ? 1.0 / static_cast<double>(count) : 0.0;
    r.loss_seg = seg * inv;
    r.loss_fld = fld * inv;
    r.loss_dld = dld * inv;
    r.loss_lld_base = lld_base * inv;
    r.loss_lld_aux = lld_aux * inv;
    r.loss_total = total * inv;
    r.gap_feat = gaps.feature * inv;
    r.gap_dec = gaps.decoded * inv;
    r.gap_logit = gaps.logit * inv;
  }
};

Tensor seg_objective(const Tensor& logits, const Tensor& labels,
                     bool use_dice) {
  Tensor loss = seg_loss(logits, labels);
  if (use_dice) loss = add(loss, soft_dice_loss(logits, labels));
  return loss;
}

// ---------------------------------------------------------------------------
// Training state for the four modes
// ---------------------------------------------------------------------------

struct TrainingSetup {
  ModelConfig model_config;
  ParamRegistry teacher_registry;
  ParamRegistry trainable;
  std::optional<TeacherModel> teacher;
  std::optional<StudentModel> student;
  std::optional<TAModule> ta;
};

TrainingSetup build_setup(const TrainConfig& config, const Dataset& data) {
  TrainingSetup setup;
  const GenConfig& gen = data.config();
  setup.model_config.channels = config.channels;
  setup.model_config.n_classes = gen.n_classes;
  setup.model_config.height = gen.height;
  setup.model_config.width = gen.width;
  setup.model_config.validate();

  switch (config.mode) {
    case TrainMode::kTeacher:
      setup.teacher.emplace(setup.model_config, setup.trainable, config.seed);
      break;
    case TrainMode::kBaseline:
      setup.student.emplace(setup.model_config, setup.trainable, config.seed);
      break;
    case TrainMode::kBridgeta:
    case TrainMode::kNoTa: {
      if (config.teacher_checkpoint.empty())
        throw InvalidArgument("distill: teacher checkpoint is required");
      if (!std::filesystem::exists(config.teacher_checkpoint))
        throw InvalidArgument("distill: teacher checkpoint not found: " +
                              config.teacher_checkpoint.string());
      setup.teacher.emplace(setup.model_config, setup.teacher_registry,
                            config.seed);
      load_checkpoint_into(setup.teacher_registry, config.teacher_checkpoint);
      setup.teacher_registry.freeze_all();
      setup.student.emplace(setup.model_config, setup.trainable, config.seed);
      if (config.mode == TrainMode::kBridgeta) {
        setup.ta.emplace(setup.model_config, setup.trainable, config.seed);
        if (config.ta_init_from_teacher) setup.ta->init_from_teacher(*setup.teacher);
      }
      break;
    }
  }
  return setup;
}

SceneEval evaluate_scene(const TrainingSetup& setup, const TrainConfig& config,
                         const TotalLossOptions& loss_options,
                         const Scene& scene) {
  SceneEval eval;
  if (config.mode == TrainMode::kTeacher) {
    TeacherOutputs out = setup.teacher->forward(scene.lidar, scene.camera);
    eval.total = seg_objective(out.logits, scene.labels, config.use_dice);
    eval.seg = eval.total.value();
    eval.total_v = eval.seg;
    eval.pred_logits = out.logits;
    return eval;
  }
  if (config.mode == TrainMode::kBaseline) {
    StudentOutputs out = setup.student->forward(scene.camera);
    eval.total = seg_objective(out.logits, scene.labels, config.use_dice);
    eval.seg = eval.total.value();
    eval.total_v = eval.seg;
    eval.pred_logits = out.logits;
    return eval;
  }
  const TAModule* ta =
      config.mode == TrainMode::kBridgeta ? &*setup.ta : nullptr;
  ForwardBundle bundle = full_distill_forward(&*setup.teacher, ta,
                                              *setup.student, scene.lidar,
                                              scene.camera);
  LossBreakdown breakdown = total_loss(bundle, scene.labels, loss_options);
  eval.total = breakdown.total;
  eval.seg = breakdown.seg.value();
  eval.fld = breakdown.fld.value();
  eval.dld = breakdown.dld.value();
  eval.lld_base = breakdown.lld_base.value();
  eval.lld_aux = breakdown.lld_aux.value();
  eval.total_v = breakdown.total.value();
  eval.gaps = representation_gaps(bundle);
  eval.pred_logits = bundle.logits_ss;
  return eval;
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["base_lr"] = c.base_lr;
  j["lambda1"] = c.weights.lambda1;
  j["lambda2"] = c.weights.lambda2;
  j["lambda3"] = c.weights.lambda3;
  j["levels"] = {{"fld", c.toggles.fld},
                 {"dld", c.toggles.dld},
                 {"lld_base", c.toggles.lld_base},
                 {"lld_aux", c.toggles.lld_aux}};
  j["seed"] = c.seed;
  j["channels"] = c.channels;
  j["data_dir"] = c.data_dir.string();
  j["out_dir"] = c.out_dir.string();
  j["teacher_checkpoint"] = c.teacher_checkpoint.string();
  j["ta_init_from_teacher"] = c.ta_init_from_teacher;
  j["use_dice"] = c.use_dice;
  j["ta_seg"] = c.ta_seg;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kTeacher: return "teacher";
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kBridgeta: return "bridgeta";
    case TrainMode::kNoTa: return "no_ta";
  }
  throw InvalidArgument("unknown train mode");
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "teacher") return TrainMode::kTeacher;
  if (name == "baseline") return TrainMode::kBaseline;
  if (name == "bridgeta") return TrainMode::kBridgeta;
  if (name == "no_ta") return TrainMode::kNoTa;
  throw InvalidArgument("unknown train mode '" + name + "'");
}

std::string TrainConfig::run_id() const {
  return to_string(mode) + "_seed" + std::to_string(seed);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train config: epochs must be >= 1");
  if (batch_size < 1)
    throw InvalidArgument("train config: batch_size must be >= 1");
  if (base_lr <= 0.0)
    throw InvalidArgument("train config: base_lr must be > 0");
  if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0)
    throw InvalidArgument("train config: loss weights must be >= 0");
  if (channels < 1)
    throw InvalidArgument("train config: channels must be >= 1");
}

TrainConfig load_train_config(const std::filesystem::path& json_path) {
  const std::string bytes = wire::read_file(json_path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const std::exception& e) {
    throw FormatError("train config " + json_path.string() + ": " + e.what());
  }
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weights.lambda1 = j.value("lambda1", c.weights.lambda1);
  c.weights.lambda2 = j.value("lambda2", c.weights.lambda2);
  c.weights.lambda3 = j.value("lambda3", c.weights.lambda3);
  if (j.contains("levels")) {
    const json& levels = j.at("levels");
    c.toggles.fld = levels.value("fld", c.toggles.fld);
    c.toggles.dld = levels.value("dld", c.toggles.dld);
    c.toggles.lld_base = levels.value("lld_base", c.toggles.lld_base);
    c.toggles.lld_aux = levels.value("lld_aux", c.toggles.lld_aux);
  }
  c.seed = j.value("seed", c.seed);
  c.channels = j.value("channels", c.channels);
  c.ta_init_from_teacher =
      j.value("ta_init_from_teacher", c.ta_init_from_teacher);
  c.use_dice = j.value("use_dice", c.use_dice);
  c.ta_seg = j.value("ta_seg", c.ta_seg);
  return c;
}

void apply_seed_env(TrainConfig& config) {
  if (const char* env = std::getenv("BRIDGETA_SEED"); env && *env)
    config.seed = std::strtoull(env, nullptr, 10);
}

void apply_seed_env(GenConfig& config) {
  if (const char* env = std::getenv("BRIDGETA_SEED"); env && *env)
    config.seed = std::strtoull(env, nullptr, 10);
}

// ---------------------------------------------------------------------------
// Gaps and evaluation
// ---------------------------------------------------------------------------

IouAccumulator::IouAccumulator(std::int64_t n_classes)
    : tp_(static_cast<std::size_t>(n_classes), 0),
      fp_(static_cast<std::size_t>(n_classes), 0),
      fn_(static_cast<std::size_t>(n_classes), 0) {
  if (n_classes < 1)
    throw InvalidArgument("iou: class count must be positive");
}

void IouAccumulator::add(const Tensor& logits, const Tensor& labels) {
  if (logits.shape() != labels.shape())
    throw InvalidArgument("iou: logits/labels shapes differ");
  if (static_cast<std::size_t>(logits.dim(0)) != tp_.size())
    throw InvalidArgument("iou: class count mismatch");
  const std::int64_t cells = logits.dim(1) * logits.dim(2);
  const double* lg = logits.data().data();
  const double* lb = labels.data().data();
  for (std::size_t c = 0; c < tp_.size(); ++c) {
    const double* lgc = lg + c * cells;
    const double* lbc = lb + c * cells;
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::int64_t i = 0; i < cells; ++i) {
      const bool pred = lgc[i] > 0.0;  // sigma(logit) > 0.5
      const bool truth = lbc[i] != 0.0;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    tp_[c] += tp;
    fp_[c] += fp;
    fn_[c] += fn;
  }
}

EvalResult IouAccumulator::result() const {
  EvalResult result;
  double sum = 0.0;
  for (std::size_t c = 0; c < tp_.size(); ++c) {
    const std::int64_t uni = tp_[c] + fp_[c] + fn_[c];
    const double iou =
        uni == 0 ? 1.0 : static_cast<double>(tp_[c]) / static_cast<double>(uni);
    result.iou.push_back(iou);
    sum += iou;
  }
  result.miou = sum / static_cast<double>(tp_.size());
  return result;
}

GapTriple representation_gaps(const ForwardBundle& bundle) {
  if (!bundle.has_teacher())
    throw InvalidArgument("representation_gaps: bundle lacks teacher outputs");
  auto gap = [](const Tensor& a, const Tensor& b) {
    const double* x = a.data().data();
    const double* y = b.data().data();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      const double d = x[i] - y[i];
      acc += d * d;
    }
    return acc / static_cast<double>(a.dim(1) * a.dim(2));
  };
  GapTriple t;
  t.feature = gap(bundle.f_fus_t, bundle.f_cam_s);
  t.decoded = gap(bundle.f_dec_t, bundle.f_dec_s);
  t.logit = gap(bundle.logits_tt, bundle.logits_ss);
  return t;
}

EvalResult evaluate_student(const StudentModel& student,
                            const std::vector<Scene>& scenes) {
  IouAccumulator counts(student.config().n_classes);
  for (const Scene& scene : scenes) {
    StudentOutputs out = student.forward(scene.camera);
    counts.add(out.logits, scene.labels);
  }
  return counts.result();
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const Dataset& data, const std::string& split) {
  ParamRegistry loaded = load_checkpoint(checkpoint);
  if (!loaded.contains("student.head.kernel"))
    throw FormatError("checkpoint " + checkpoint.string() +
                      ": not a student checkpoint");
  const Shape& head = loaded.get("student.head.kernel").shape();
  ModelConfig config;
  config.n_classes = head[0];
  config.channels = head[1];
  config.height = data.config().height;
  config.width = data.config().width;
  ParamRegistry registry;
  StudentModel student(config, registry, /*seed=*/0);
  load_checkpoint_into(registry, checkpoint);
  return evaluate_student(student, data.split(split));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

RunResult run_impl(const TrainConfig& config, const Dataset& data) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  TrainingSetup setup = build_setup(config, data);
  const std::int64_t n_classes = setup.model_config.n_classes;
  const bool distill_mode = config.mode == TrainMode::kBridgeta ||
                            config.mode == TrainMode::kNoTa;

  TotalLossOptions loss_options;
  loss_options.weights = config.weights;
  loss_options.toggles = config.toggles;
  loss_options.use_dice = config.use_dice;
  loss_options.ta_seg = config.ta_seg;
  if (!distill_mode)
    loss_options.toggles = LevelToggles{false, false, false, false};

  AdamState adam;
  CosineSchedule schedule{config.base_lr, config.epochs, 0.0};
  const std::string run_id = config.run_id();
  const auto run_start = Clock::now();

  RunResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(schedule, static_cast<double>(epoch));
    const auto train_start = Clock::now();

    Accumulator train_acc;
    IouAccumulator train_iou(n_classes);
    for (const auto& batch :
         data.batches("train", config.batch_size, config.seed, epoch)) {
      Tape tape;
      Tensor batch_sum;
      for (const Scene* scene : batch) {
        SceneEval eval = evaluate_scene(setup, config, loss_options, *scene);
        train_acc.add(eval);
        train_iou.add(eval.pred_logits, scene->labels);
        batch_sum = batch_sum.defined() ? add(batch_sum, eval.total)
                                        : eval.total;
      }
      Tensor batch_mean =
          scale(batch_sum, 1.0 / static_cast<double>(batch.size()));
      setup.trainable.ensure_grad_buffers();
      backward(batch_mean);
      adam_step(setup.trainable, adam, lr);
    }

    MetricsRecord train_record;
    train_record.run_id = run_id;
    train_record.mode = to_string(config.mode);
    train_record.epoch = epoch;
    train_record.split = "train";
    EvalResult train_eval = train_iou.result();
    train_record.iou = train_eval.iou;
    train_record.miou = train_eval.miou;
    train_acc.fill(train_record);
    train_record.lr = lr;
    train_record.seconds = elapsed_seconds(train_start);
    result.metrics.push_back(train_record);

    // validation pass: no tape active, so nothing records
    const auto val_start = Clock::now();
    Accumulator val_acc;
    IouAccumulator val_iou(n_classes);
    for (const Scene& scene : data.split("val")) {
      SceneEval eval = evaluate_scene(setup, config, loss_options, scene);
      val_acc.add(eval);
      val_iou.add(eval.pred_logits, scene.labels);
    }
    MetricsRecord val_record = train_record;
    val_record.split = "val";
    EvalResult val_eval = val_iou.result();
    val_record.iou = val_eval.iou;
    val_record.miou = val_eval.miou;
    val_acc.fill(val_record);
    val_record.seconds = elapsed_seconds(val_start);
    result.metrics.push_back(val_record);
    result.final_val_miou = val_eval.miou;
  }

  // artifacts
  if (config.mode == TrainMode::kTeacher) {
    setup.trainable.freeze_all();  // ships frozen; distillation loads it as-is
    result.checkpoint = config.out_dir / "teacher.ckpt";
    save_checkpoint(setup.trainable, result.checkpoint);
  } else {
    result.checkpoint = config.out_dir / "student.ckpt";
    save_checkpoint(subset_by_prefix(setup.trainable, "student."),
                    result.checkpoint);
    if (config.mode == TrainMode::kBridgeta) {
      result.ta_checkpoint = config.out_dir / "ta.ckpt";
      save_checkpoint(subset_by_prefix(setup.trainable, "ta."),
                      result.ta_checkpoint);
    }
  }
  write_metrics_csv(config.out_dir / "metrics.csv", result.metrics,
                    static_cast<int>(n_classes));

  json manifest;
  manifest["run_id"] = run_id;
  manifest["version"] = kVersionString;
  manifest["config"] = train_config_to_json(config);
  manifest["dataset_manifest_sha256"] = data.manifest_sha256();
  manifest["gap_split"] = "val";
  json checkpoints;
  checkpoints["main"] = result.checkpoint.filename().string();
  if (!result.ta_checkpoint.empty())
    checkpoints["ta"] = result.ta_checkpoint.filename().string();
  manifest["checkpoints"] = checkpoints;
  json final_summary;
  final_summary["val_miou"] = result.final_val_miou;
  final_summary["val_iou"] = result.metrics.back().iou;
  manifest["final"] = final_summary;
  manifest["wall_seconds"] = elapsed_seconds(run_start);
  wire::write_file(config.out_dir / "run_manifest.json",
                   manifest.dump(2) + "\n");
  return result;
}

}  // namespace

RunResult run_training(const TrainConfig& config, const Dataset& data) {
  return run_impl(config, data);
}

RunResult train_teacher(const TrainConfig& config, const Dataset& data) {
  TrainConfig c = config;
  c.mode = TrainMode::kTeacher;
  return run_impl(c, data);
}

RunResult train_baseline(const TrainConfig& config, const Dataset& data) {
  TrainConfig c = config;
  c.mode = TrainMode::kBaseline;
  return run_impl(c, data);
}

RunResult distill(const TrainConfig& config, const Dataset& data) {
  if (config.mode != TrainMode::kBridgeta && config.mode != TrainMode::kNoTa)
    throw InvalidArgument("distill: mode must be bridgeta or no_ta");
  return run_impl(config, data);
}

}  // namespace bridgeta
