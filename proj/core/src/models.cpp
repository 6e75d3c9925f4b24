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

#include "bridgeta/models.hpp"

#include <algorithm>
#include <vector>

#include "bridgeta/errors.hpp"

namespace bridgeta {

void ModelConfig::validate() const {
  if (channels < 1) throw InvalidArgument("model config: channels must be >= 1");
  if (n_classes < 1)
    throw InvalidArgument("model config: n_classes must be >= 1");
  if (height < 1 || width < 1)
    throw InvalidArgument("model config: grid must be positive");
  if (lidar_channels != 1 || camera_channels != 3)
    throw InvalidArgument("model config: expected 1 lidar / 3 camera channels");
  if (kernel < 1 || kernel % 2 == 0)
    throw InvalidArgument("model config: kernel must be odd");
}

bool ForwardBundle::complete() const {
  return f_lid_t.defined() && f_cam_t.defined() && f_fus_t.defined() &&
         f_dec_t.defined() && logits_tt.defined() && f_cam_s.defined() &&
         f_dec_s.defined() && logits_ss.defined() && f_fus_ta.defined() &&
         f_dec_ta.defined() && logits_tata.defined() &&
         logits_s_t.defined() && logits_s_ta.defined();
}

namespace {

int same_pad(std::int64_t k) { return static_cast<int>((k - 1) / 2); }

void check_grid(const Tensor& x, std::int64_t channels,
                const ModelConfig& config, const char* what) {
  if (x.rank() != 3 || x.dim(0) != channels || x.dim(1) != config.height ||
      x.dim(2) != config.width)
    throw InvalidArgument(std::string(what) + ": grid does not match config");
}

void copy_layer_values(const ConvLayer& src, ConvLayer& dst) {
  auto kd = dst.kernel.mutable_data();
  auto ks = src.kernel.data();
  std::copy(ks.begin(), ks.end(), kd.begin());
  auto bd = dst.bias.mutable_data();
  auto bs = src.bias.data();
  std::copy(bs.begin(), bs.end(), bd.begin());
}

}  // namespace

// ---------------------------------------------------------------------------
// TeacherModel
// ---------------------------------------------------------------------------

TeacherModel::TeacherModel(const ModelConfig& config, ParamRegistry& registry,
                           std::uint64_t seed)
    : config_(config) {
  config.validate();
  const std::int64_t c = config.channels;
  const std::int64_t k = config.kernel;
  const int pad = same_pad(k);
  lidar_enc1_ = make_conv_layer(registry, "teacher.lidar_enc1",
                                config.lidar_channels, c, k, pad,
                                Activation::kRelu, seed);
  lidar_enc2_ = make_conv_layer(registry, "teacher.lidar_enc2", c, c, k, pad,
                                Activation::kRelu, seed);
  cam_enc1_ = make_conv_layer(registry, "teacher.cam_enc1",
                              config.camera_channels, c, k, pad,
                              Activation::kRelu, seed);
  cam_enc2_ = make_conv_layer(registry, "teacher.cam_enc2", c, c, k, pad,
                              Activation::kRelu, seed);
  fuser_ = make_conv_layer(registry, "teacher.fuser", 2 * c, c, k, pad,
                           Activation::kRelu, seed);
  dec1_ = make_conv_layer(registry, "teacher.dec1", c, c, k, pad,
                          Activation::kRelu, seed);
  dec2_ = make_conv_layer(registry, "teacher.dec2", c, c, k, pad,
                          Activation::kRelu, seed);
  head_ = make_conv_layer(registry, "teacher.head", c, config.n_classes, 1, 0,
                          Activation::kNone, seed);
}

TeacherOutputs TeacherModel::forward(const Tensor& lidar,
                                     const Tensor& camera) const {
  check_grid(lidar, config_.lidar_channels, config_, "teacher lidar input");
  check_grid(camera, config_.camera_channels, config_, "teacher camera input");
  TeacherOutputs out;
  out.f_lid = lidar_enc2_.forward(lidar_enc1_.forward(lidar));
  out.f_cam = cam_enc2_.forward(cam_enc1_.forward(camera));
  const Tensor both[] = {out.f_lid, out.f_cam};
  out.f_fus = fuser_.forward(concat_channels(both));
  out.f_dec = dec2_.forward(dec1_.forward(out.f_fus));
  out.logits = head_.forward(out.f_dec);
  return out;
}

// ---------------------------------------------------------------------------
// StudentModel
// ---------------------------------------------------------------------------

StudentModel::StudentModel(const ModelConfig& config, ParamRegistry& registry,
                           std::uint64_t seed)
    : config_(config) {
  config.validate();
  const std::int64_t c = config.channels;
  const std::int64_t k = config.kernel;
  const int pad = same_pad(k);
  cam_enc1_ = make_conv_layer(registry, "student.cam_enc1",
                              config.camera_channels, c, k, pad,
                              Activation::kRelu, seed);
  cam_enc2_ = make_conv_layer(registry, "student.cam_enc2", c, c, k, pad,
                              Activation::kRelu, seed);
  dec1_ = make_conv_layer(registry, "student.dec1", c, c, k, pad,
                          Activation::kRelu, seed);
  dec2_ = make_conv_layer(registry, "student.dec2", c, c, k, pad,
                          Activation::kRelu, seed);
  head_ = make_conv_layer(registry, "student.head", c, config.n_classes, 1, 0,
                          Activation::kNone, seed);
}

StudentOutputs StudentModel::forward(const Tensor& camera) const {
  check_grid(camera, config_.camera_channels, config_, "student camera input");
  StudentOutputs out;
  out.f_cam = cam_enc2_.forward(cam_enc1_.forward(camera));
  out.f_dec = dec2_.forward(dec1_.forward(out.f_cam));
  out.logits = head_.forward(out.f_dec);
  return out;
}

std::int64_t StudentModel::forward_multiplies() const {
  const std::int64_t hw = config_.height * config_.width;
  auto macs = [hw](const ConvLayer& layer) {
    const Shape& s = layer.kernel.shape();
    return s[0] * s[1] * s[2] * s[3] * hw;
  };
  return macs(cam_enc1_) + macs(cam_enc2_) + macs(dec1_) + macs(dec2_) +
         macs(head_);
}

// ---------------------------------------------------------------------------
// TAModule
// ---------------------------------------------------------------------------

TAModule::TAModule(const ModelConfig& config, ParamRegistry& registry,
                   std::uint64_t seed)
    : config_(config) {
  config.validate();
  const std::int64_t c = config.channels;
  const std::int64_t k = config.kernel;
  const int pad = same_pad(k);
  fuser_ = make_conv_layer(registry, "ta.fuser", 2 * c, c, k, pad,
                           Activation::kRelu, seed);
  dec1_ = make_conv_layer(registry, "ta.dec1", c, c, k, pad, Activation::kRelu,
                          seed);
  dec2_ = make_conv_layer(registry, "ta.dec2", c, c, k, pad, Activation::kRelu,
                          seed);
  head_ = make_conv_layer(registry, "ta.head", c, config.n_classes, 1, 0,
                          Activation::kNone, seed);
}

TaOutputs TAModule::forward(const Tensor& f_lid_teacher,
                            const Tensor& f_cam_student) const {
  check_grid(f_lid_teacher, config_.channels, config_, "ta lidar feature");
  check_grid(f_cam_student, config_.channels, config_, "ta camera feature");
  const Tensor both[] = {f_lid_teacher.detach(), f_cam_student};
  TaOutputs out;
  out.f_fus = fuser_.forward(concat_channels(both));
  out.f_dec = dec2_.forward(dec1_.forward(out.f_fus));
  out.logits = head_.forward(out.f_dec);
  return out;
}

void TAModule::init_from_teacher(const TeacherModel& teacher) {
  copy_layer_values(teacher.fuser(), fuser_);
  copy_layer_values(teacher.decoder1(), dec1_);
  copy_layer_values(teacher.decoder2(), dec2_);
  copy_layer_values(teacher.head(), head_);
}

// ---------------------------------------------------------------------------
// Cross-head and joint forward
// ---------------------------------------------------------------------------

Tensor conduit_head_forward(const ConvLayer& head, const Tensor& f_dec_s) {
  Tensor logits = conv2d(f_dec_s, head.kernel.detach(), head.bias.detach(),
                         head.padding);
  if (head.activation == Activation::kRelu) logits = relu(logits);
  return logits;
}

ForwardBundle full_distill_forward(const TeacherModel* teacher,
                                   const TAModule* ta,
                                   const StudentModel& student,
                                   const Tensor& lidar, const Tensor& camera) {
  ForwardBundle bundle;
  StudentOutputs s = student.forward(camera);
  bundle.f_cam_s = s.f_cam;
  bundle.f_dec_s = s.f_dec;
  bundle.logits_ss = s.logits;
  if (teacher == nullptr) return bundle;  // plain inference shape

  TeacherOutputs t = teacher->forward(lidar, camera);
  bundle.f_lid_t = t.f_lid;
  bundle.f_cam_t = t.f_cam;
  bundle.f_fus_t = t.f_fus;
  bundle.f_dec_t = t.f_dec;
  bundle.logits_tt = t.logits;
  bundle.logits_s_t = conduit_head_forward(teacher->head(), s.f_dec);

  if (ta != nullptr) {
    TaOutputs a = ta->forward(t.f_lid, s.f_cam);
    bundle.f_fus_ta = a.f_fus;
    bundle.f_dec_ta = a.f_dec;
    bundle.logits_tata = a.logits;
    bundle.logits_s_ta = conduit_head_forward(ta->head(), s.f_dec);
  }
  return bundle;
}

}  // namespace bridgeta
