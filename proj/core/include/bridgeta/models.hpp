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

#ifndef BRIDGETA_MODELS_HPP_
#define BRIDGETA_MODELS_HPP_

#include <cstdint>

#include "bridgeta/nn.hpp"
#include "bridgeta/tensor.hpp"

namespace bridgeta {

/// Shared dimensions. Feature, decoded and logit levels all use the same
/// channel count C and the same spatial grid, which keeps the three
/// distillation levels aligned without any resampling.
struct ModelConfig {
  std::int64_t channels = 16;  // C, equal across teacher / TA / student
  std::int64_t n_classes = 4;
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t lidar_channels = 1;
  std::int64_t camera_channels = 3;
  std::int64_t kernel = 3;

  void validate() const;
};

struct TeacherOutputs {
  Tensor f_lid;   // lidar BEV feature, C x H x W
  Tensor f_cam;   // camera BEV feature
  Tensor f_fus;   // fused BEV feature
  Tensor f_dec;   // decoded feature
  Tensor logits;  // N_c x H x W
};

struct StudentOutputs {
  Tensor f_cam;
  Tensor f_dec;
  Tensor logits;
};

struct TaOutputs {
  Tensor f_fus;
  Tensor f_dec;
  Tensor logits;
};

/// Every representation one training step needs. Cross-head logits come
/// from pushing the student's decoded feature through the teacher and TA
/// heads.
struct ForwardBundle {
  Tensor f_lid_t, f_cam_t, f_fus_t, f_dec_t, logits_tt;
  Tensor f_cam_s, f_dec_s, logits_ss;
  Tensor f_fus_ta, f_dec_ta, logits_tata;
  Tensor logits_s_t, logits_s_ta;

  bool has_teacher() const { return logits_tt.defined(); }
  bool has_ta() const { return logits_tata.defined(); }
  /// All thirteen representations present.
  bool complete() const;
};

/// Fusion teacher: lidar + camera encoders, concat fuser, decoder, head.
class TeacherModel {
 public:
  TeacherModel(const ModelConfig& config, ParamRegistry& registry,
               std::uint64_t seed);
  TeacherOutputs forward(const Tensor& lidar, const Tensor& camera) const;
  const ModelConfig& config() const { return config_; }
  const ConvLayer& fuser() const { return fuser_; }
  const ConvLayer& decoder1() const { return dec1_; }
  const ConvLayer& decoder2() const { return dec2_; }
  const ConvLayer& head() const { return head_; }

 private:
  ModelConfig config_;
  ConvLayer lidar_enc1_, lidar_enc2_;
  ConvLayer cam_enc1_, cam_enc2_;
  ConvLayer fuser_;
  ConvLayer dec1_, dec2_;
  ConvLayer head_;
};

/// Camera-only student; identical to the undistilled baseline network.
class StudentModel {
 public:
  StudentModel(const ModelConfig& config, ParamRegistry& registry,
               std::uint64_t seed);
  StudentOutputs forward(const Tensor& camera) const;
  const ModelConfig& config() const { return config_; }
  /// Multiplies in one inference forward; parity evidence for the
  /// zero-overhead claim.
  std::int64_t forward_multiplies() const;

 private:
  ModelConfig config_;
  ConvLayer cam_enc1_, cam_enc2_;
  ConvLayer dec1_, dec2_;
  ConvLayer head_;
};

/// Backbone-free assistant: consumes the teacher's lidar BEV feature and
/// the student's camera BEV feature; owns only fuser + decoder + head.
class TAModule {
 public:
  TAModule(const ModelConfig& config, ParamRegistry& registry,
           std::uint64_t seed);
  /// f_lid_teacher is treated as a constant; gradient flows into
  /// f_cam_student only.
  TaOutputs forward(const Tensor& f_lid_teacher,
                    const Tensor& f_cam_student) const;
  /// Copies the teacher's fuser/decoder/head weights, so the TA starts as
  /// the teacher's own pipeline reading the student's camera feature.
  void init_from_teacher(const TeacherModel& teacher);
  const ModelConfig& config() const { return config_; }
  const ConvLayer& head() const { return head_; }

 private:
  ModelConfig config_;
  ConvLayer fuser_;
  ConvLayer dec1_, dec2_;
  ConvLayer head_;
};

/// Pushes the student's decoded feature through another model's head with
/// the head weights detached: the head acts as a conduit, passing gradient
/// into the feature but receiving none itself.
Tensor conduit_head_forward(const ConvLayer& head, const Tensor& f_dec_s);

/// One joint pass: teacher (optional), student, TA (optional), cross
/// heads. teacher == nullptr yields the student triple only; ta == nullptr
/// yields the direct teacher-student shape used by the no-TA ablation
/// (cross logits through the teacher head only).
ForwardBundle full_distill_forward(const TeacherModel* teacher,
                                   const TAModule* ta,
                                   const StudentModel& student,
                                   const Tensor& lidar, const Tensor& camera);

}  // namespace bridgeta

#endif  // BRIDGETA_MODELS_HPP_
