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

#include <doctest.h>

#include <string>
#include <vector>

#include "bridgeta/errors.hpp"
#include "bridgeta/losses.hpp"
#include "bridgeta/rng.hpp"
#include "test_util.hpp"

using namespace bridgeta;
using testutil::random_tensor;

namespace {

ModelConfig mini_config() {
  ModelConfig c;
  c.channels = 4;
  c.n_classes = 3;
  c.height = 8;
  c.width = 8;
  return c;
}

Tensor random_labels(const ModelConfig& c, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(c.n_classes * c.height *
                                                 c.width));
  for (auto& x : v) x = rng.bernoulli(0.35) ? 1.0 : 0.0;
  return Tensor::from_data({c.n_classes, c.height, c.width}, std::move(v));
}

void zero_params(ParamRegistry& reg) {
  for (const auto& entry : reg.entries()) {
    Tensor t = entry.tensor;
    for (double& v : t.mutable_data()) v = 0.0;
  }
}

}  // namespace

TEST_CASE("forward shape contracts") {
  ModelConfig config;  // defaults: C=16, 32x32, 4 classes
  ParamRegistry reg;
  TeacherModel teacher(config, reg, 1);
  StudentModel student(config, reg, 1);
  TAModule ta(config, reg, 1);

  Rng rng(2);
  Tensor lidar = random_tensor({1, 32, 32}, rng, 0, 1);
  Tensor camera = random_tensor({3, 32, 32}, rng, 0, 1);

  TeacherOutputs t = teacher.forward(lidar, camera);
  CHECK(t.f_lid.shape() == Shape{16, 32, 32});
  CHECK(t.f_cam.shape() == Shape{16, 32, 32});
  CHECK(t.f_fus.shape() == Shape{16, 32, 32});
  CHECK(t.f_dec.shape() == Shape{16, 32, 32});
  CHECK(t.logits.shape() == Shape{4, 32, 32});

  StudentOutputs s = student.forward(camera);
  CHECK(s.f_cam.shape() == Shape{16, 32, 32});
  CHECK(s.f_dec.shape() == Shape{16, 32, 32});
  CHECK(s.logits.shape() == Shape{4, 32, 32});

  TaOutputs a = ta.forward(t.f_lid, s.f_cam);
  CHECK(a.f_fus.shape() == Shape{16, 32, 32});
  CHECK(a.f_dec.shape() == Shape{16, 32, 32});
  CHECK(a.logits.shape() == Shape{4, 32, 32});

  CHECK_THROWS_AS(teacher.forward(camera, camera), InvalidArgument);
  CHECK_THROWS_AS(student.forward(lidar), InvalidArgument);
}

TEST_CASE("zero weights make every representation bias-determined") {
  ModelConfig config = mini_config();
  ParamRegistry reg;
  TeacherModel teacher(config, reg, 3);
  StudentModel student(config, reg, 3);
  TAModule ta(config, reg, 3);
  zero_params(reg);
  // a recognizable head bias
  {
    Tensor bias = reg.get("teacher.head.bias");
    for (double& v : bias.mutable_data()) v = 0.25;
  }

  Rng rng(4);
  Tensor lidar = random_tensor({1, 8, 8}, rng, 0, 1);
  Tensor camera = random_tensor({3, 8, 8}, rng, 0, 1);
  TeacherOutputs t = teacher.forward(lidar, camera);
  for (double v : t.f_fus.data()) CHECK(v == 0.0);
  for (double v : t.f_dec.data()) CHECK(v == 0.0);
  for (double v : t.logits.data()) CHECK(v == 0.25);

  StudentOutputs s = student.forward(camera);
  for (double v : s.logits.data()) CHECK(v == 0.0);

  TaOutputs a = ta.forward(t.f_lid, s.f_cam);
  for (double v : a.f_fus.data()) CHECK(v == 0.0);
}

TEST_CASE("TA owns only fuser, decoder and head parameters") {
  ModelConfig config = mini_config();
  ParamRegistry reg;
  TAModule ta(config, reg, 5);
  CHECK(reg.size() == 8);  // 4 layers x (kernel, bias)
  for (const auto& entry : reg.entries()) {
    const bool expected = entry.name.rfind("ta.fuser", 0) == 0 ||
                          entry.name.rfind("ta.dec1", 0) == 0 ||
                          entry.name.rfind("ta.dec2", 0) == 0 ||
                          entry.name.rfind("ta.head", 0) == 0;
    CHECK(expected);
  }
}

TEST_CASE("cross-head forward") {
  ModelConfig config = mini_config();
  ParamRegistry treg, sreg;
  TeacherModel teacher(config, treg, 6);
  StudentModel student(config, sreg, 7);
  Rng rng(8);
  Tensor lidar = random_tensor({1, 8, 8}, rng, 0, 1);
  Tensor camera = random_tensor({3, 8, 8}, rng, 0, 1);
  TeacherOutputs t = teacher.forward(lidar, camera);

  SUBCASE("same head, same input gives the same logits") {
    Tensor through_conduit = conduit_head_forward(teacher.head(), t.f_dec);
    CHECK(testutil::to_vec(through_conduit.data()) ==
          testutil::to_vec(t.logits.data()));
  }

  SUBCASE("heads are conduits: gradient passes through, none sticks") {
    ParamRegistry areg;
    TAModule ta(config, areg, 9);
    Tensor f_dec = random_tensor({4, 8, 8}, rng, -1, 1, true);
    {
      Tape tape;
      Tensor l_s_ta = conduit_head_forward(ta.head(), f_dec);
      backward(sum_all(l_s_ta));
    }
    CHECK(f_dec.has_grad());
    CHECK_FALSE(areg.get("ta.head.kernel").has_grad());
    CHECK_FALSE(areg.get("ta.head.bias").has_grad());
  }

  SUBCASE("output shape") {
    Tensor out = conduit_head_forward(teacher.head(), t.f_dec);
    CHECK(out.shape() == Shape{3, 8, 8});
  }
}

TEST_CASE("TA forward routes gradient to the student encoder only") {
  ModelConfig config = mini_config();
  ParamRegistry treg, areg;
  TeacherModel teacher(config, treg, 10);
  treg.freeze_all();
  TAModule ta(config, areg, 11);

  Rng rng(12);
  Tensor lidar = random_tensor({1, 8, 8}, rng, 0, 1);
  Tensor camera = random_tensor({3, 8, 8}, rng, 0, 1);
  Tensor f_cam_s = random_tensor({4, 8, 8}, rng, -1, 1, true);
  {
    Tape tape;
    TeacherOutputs t = teacher.forward(lidar, camera);
    TaOutputs a = ta.forward(t.f_lid, f_cam_s);
    backward(sq_norm(a.f_fus));
  }
  CHECK(f_cam_s.has_grad());
  for (const auto& entry : treg.entries()) CHECK_FALSE(entry.tensor.has_grad());
  CHECK(areg.get("ta.fuser.kernel").has_grad());

  SUBCASE("zero fuser weights blank the fused feature") {
    zero_params(areg);
    TeacherOutputs t = teacher.forward(lidar, camera);
    TaOutputs a = ta.forward(t.f_lid, f_cam_s);
    for (double v : a.f_fus.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("full_distill_forward bundle shapes") {
  ModelConfig config = mini_config();
  ParamRegistry treg, sreg, areg;
  TeacherModel teacher(config, treg, 13);
  treg.freeze_all();
  StudentModel student(config, sreg, 14);
  TAModule ta(config, areg, 15);

  Rng rng(16);
  Tensor lidar = random_tensor({1, 8, 8}, rng, 0, 1);
  Tensor camera = random_tensor({3, 8, 8}, rng, 0, 1);

  SUBCASE("complete bundle with TA") {
    ForwardBundle bundle =
        full_distill_forward(&teacher, &ta, student, lidar, camera);
    CHECK(bundle.complete());
    CHECK(bundle.has_ta());
    CHECK(bundle.logits_s_t.shape() == Shape{3, 8, 8});
    CHECK(bundle.logits_s_ta.shape() == Shape{3, 8, 8});

    Tensor labels = random_labels(config, rng);
    LossBreakdown out = total_loss(bundle, labels, {});
    CHECK(std::isfinite(out.total.value()));
  }

  SUBCASE("inference mode produces the student triple only") {
    ForwardBundle bundle =
        full_distill_forward(nullptr, nullptr, student, Tensor(), camera);
    CHECK(bundle.f_cam_s.defined());
    CHECK(bundle.f_dec_s.defined());
    CHECK(bundle.logits_ss.defined());
    CHECK_FALSE(bundle.has_teacher());
    CHECK_FALSE(bundle.has_ta());
    CHECK_FALSE(bundle.complete());
  }

  SUBCASE("no-TA bundle keeps the teacher cross head") {
    ForwardBundle bundle =
        full_distill_forward(&teacher, nullptr, student, lidar, camera);
    CHECK(bundle.has_teacher());
    CHECK_FALSE(bundle.has_ta());
    CHECK(bundle.logits_s_t.defined());
    CHECK_FALSE(bundle.logits_s_ta.defined());
  }
}

TEST_CASE("distillation wrapping leaves the student untouched") {
  ModelConfig config;  // full-size defaults
  ParamRegistry baseline_reg, distill_reg;
  StudentModel baseline(config, baseline_reg, 77);
  StudentModel distilled(config, distill_reg, 77);

  CHECK(param_count(baseline_reg, true) == param_count(distill_reg, true));
  CHECK(baseline.forward_multiplies() == distilled.forward_multiplies());
  REQUIRE(baseline_reg.size() == distill_reg.size());
  for (std::size_t i = 0; i < baseline_reg.size(); ++i) {
    CHECK(baseline_reg.entries()[i].name == distill_reg.entries()[i].name);
    CHECK(baseline_reg.entries()[i].tensor.shape() ==
          distill_reg.entries()[i].tensor.shape());
    CHECK(testutil::to_vec(baseline_reg.entries()[i].tensor.data()) ==
          testutil::to_vec(distill_reg.entries()[i].tensor.data()));
  }
}

TEST_CASE("TA initialization from the teacher copies decoder and head") {
  ModelConfig config = mini_config();
  ParamRegistry treg, areg;
  TeacherModel teacher(config, treg, 20);
  TAModule ta(config, areg, 21);

  ta.init_from_teacher(teacher);
  CHECK(testutil::to_vec(areg.get("ta.dec1.kernel").data()) ==
        testutil::to_vec(treg.get("teacher.dec1.kernel").data()));
  CHECK(testutil::to_vec(areg.get("ta.dec2.kernel").data()) ==
        testutil::to_vec(treg.get("teacher.dec2.kernel").data()));
  CHECK(testutil::to_vec(areg.get("ta.head.kernel").data()) ==
        testutil::to_vec(treg.get("teacher.head.kernel").data()));
  CHECK(testutil::to_vec(areg.get("ta.head.bias").data()) ==
        testutil::to_vec(treg.get("teacher.head.bias").data()));
  CHECK(testutil::to_vec(areg.get("ta.fuser.kernel").data()) ==
        testutil::to_vec(treg.get("teacher.fuser.kernel").data()));
}

TEST_CASE("gradient-flow contract across the full loss") {
  ModelConfig config = mini_config();
  ParamRegistry treg, sreg, areg;
  TeacherModel teacher(config, treg, 30);
  treg.freeze_all();
  StudentModel student(config, sreg, 31);
  TAModule ta(config, areg, 32);
  ta.init_from_teacher(teacher);

  Rng rng(33);
  Tensor lidar = random_tensor({1, 8, 8}, rng, 0, 1);
  Tensor camera = random_tensor({3, 8, 8}, rng, 0, 1);
  Tensor labels = random_labels(config, rng);

  SUBCASE("teacher parameters never receive gradient") {
    Tape tape;
    ForwardBundle bundle =
        full_distill_forward(&teacher, &ta, student, lidar, camera);
    LossBreakdown out = total_loss(bundle, labels, {});
    backward(out.total);
    for (const auto& entry : treg.entries())
      CHECK_FALSE(entry.tensor.has_grad());
    CHECK(sreg.get("student.cam_enc1.kernel").has_grad());
    CHECK(areg.get("ta.fuser.kernel").has_grad());
  }

  SUBCASE("aux KL path leaves both cross heads untouched") {
    Tape tape;
    ForwardBundle bundle =
        full_distill_forward(&teacher, &ta, student, lidar, camera);
    Tensor aux = lld_aux(bundle.logits_tt, bundle.logits_s_t,
                         bundle.logits_tata, bundle.logits_s_ta);
    backward(aux);
    CHECK_FALSE(areg.get("ta.head.kernel").has_grad());
    CHECK_FALSE(areg.get("ta.head.bias").has_grad());
    for (const auto& entry : treg.entries())
      CHECK_FALSE(entry.tensor.has_grad());
    // gradient reached the student through the conduits
    CHECK(sreg.get("student.dec2.kernel").has_grad());
  }

  SUBCASE("student encoder gets gradient through the TA fuser") {
    Tape tape;
    ForwardBundle bundle =
        full_distill_forward(&teacher, &ta, student, lidar, camera);
    // only the t2ta half of the feature level: touches the student encoder
    // solely through the TA fuser input
    DualPathTerms terms =
        fld_loss(bundle.f_fus_t, bundle.f_fus_ta, bundle.f_cam_s);
    backward(terms.loss_t2ta);
    CHECK(sreg.get("student.cam_enc1.kernel").has_grad());
    CHECK(sreg.get("student.cam_enc2.kernel").has_grad());
  }
}
