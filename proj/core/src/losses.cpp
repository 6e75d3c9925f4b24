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

#include "bridgeta/losses.hpp"

#include <cmath>

#include "bridgeta/errors.hpp"

namespace bridgeta {

namespace {

double sq_norm_value(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double frobenius_gap(const Tensor& x, const Tensor& y) {
  const double* a = x.data().data();
  const double* b = y.data().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void check_triple(const Tensor& r_s, const Tensor& r_ta, const Tensor& r_t,
                  const char* what) {
  if (!r_s.defined() || !r_ta.defined() || !r_t.defined())
    throw InvalidArgument(std::string(what) + ": undefined representation");
  if (r_s.rank() != 3)
    throw InvalidArgument(std::string(what) + ": representations must be CxHxW");
  if (r_s.shape() != r_ta.shape() || r_s.shape() != r_t.shape())
    throw InvalidArgument(std::string(what) + ": representation shapes differ");
}

Tensor clamped_sigmoid(const Tensor& logits) {
  return clamp(sigmoid(logits), kProbClamp, 1.0 - kProbClamp);
}

Tensor one_minus(const Tensor& p) { return add(scale(p, -1.0), 1.0); }

}  // namespace

double young_rhs(const Tensor& x, const Tensor& y, double eps) {
  if (!x.defined() || !y.defined())
    throw InvalidArgument("young_rhs: undefined operand");
  if (x.shape() != y.shape())
    throw InvalidArgument("young_rhs: operand shapes differ");
  if (!(eps > 0.0)) throw InvalidArgument("young_rhs: eps must be > 0");
  return (1.0 + eps) * sq_norm_value(x.data()) +
         (1.0 + 1.0 / eps) * sq_norm_value(y.data());
}

double epsilon_star(double a, double b) {
  if (a < 0.0 || b < 0.0)
    throw InvalidArgument("epsilon_star: norms must be non-negative");
  if (a < 1e-12) return kEpsStarMax;
  if (b < 1e-12) return kEpsStarMin;
  const double ratio = b / a;
  if (ratio < kEpsStarMin) return kEpsStarMin;
  if (ratio > kEpsStarMax) return kEpsStarMax;
  return ratio;
}

double f_objective(double a, double b, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("f_objective: eps must be > 0");
  return (1.0 + eps) * a * a + (1.0 + 1.0 / eps) * b * b;
}

DualPathTerms dual_path_mse(const Tensor& r_student, const Tensor& r_ta,
                            const Tensor& r_teacher) {
  check_triple(r_student, r_ta, r_teacher, "dual_path_mse");
  const double cell_count =
      static_cast<double>(r_student.dim(1) * r_student.dim(2));

  DualPathTerms terms;
  terms.a = frobenius_gap(r_student, r_ta);
  terms.b = frobenius_gap(r_ta, r_teacher);
  terms.eps_star = epsilon_star(terms.a, terms.b);
  terms.loss_t2ta =
      scale(sq_norm(sub(r_ta, r_teacher.detach())), 1.0 / cell_count);
  terms.loss_ta2s =
      scale(sq_norm(sub(r_student, r_ta.detach())), 1.0 / cell_count);
  terms.weighted_total =
      add(scale(terms.loss_ta2s, 1.0 + terms.eps_star),
          scale(terms.loss_t2ta, 1.0 + 1.0 / terms.eps_star));
  return terms;
}

DualPathTerms fld_loss(const Tensor& f_fus_t, const Tensor& f_fus_ta,
                       const Tensor& f_cam_s) {
  return dual_path_mse(f_cam_s, f_fus_ta, f_fus_t);
}

DualPathTerms dld_loss(const Tensor& f_dec_t, const Tensor& f_dec_ta,
                       const Tensor& f_dec_s) {
  return dual_path_mse(f_dec_s, f_dec_ta, f_dec_t);
}

DualPathTerms lld_base(const Tensor& logits_tt, const Tensor& logits_tata,
                       const Tensor& logits_ss) {
  return dual_path_mse(logits_ss, logits_tata, logits_tt);
}

Tensor bernoulli_kl(const Tensor& p_logits, const Tensor& q_logits) {
  if (!p_logits.defined() || !q_logits.defined())
    throw InvalidArgument("bernoulli_kl: undefined operand");
  if (p_logits.shape() != q_logits.shape())
    throw InvalidArgument("bernoulli_kl: operand shapes differ");
  const Tensor p = clamped_sigmoid(p_logits.detach());  // target distribution
  const Tensor q = clamped_sigmoid(q_logits);
  const Tensor pos = mul(p, sub(log(p), log(q)));
  const Tensor p1 = one_minus(p);
  const Tensor q1 = one_minus(q);
  const Tensor neg = mul(p1, sub(log(p1), log(q1)));
  return mean_all(add(pos, neg));
}

Tensor lld_aux(const Tensor& logits_tt, const Tensor& logits_s_t,
               const Tensor& logits_tata, const Tensor& logits_s_ta) {
  return add(bernoulli_kl(logits_tt, logits_s_t),
             bernoulli_kl(logits_tata, logits_s_ta));
}

Tensor seg_loss(const Tensor& logits, const Tensor& labels) {
  if (!logits.defined() || !labels.defined())
    throw InvalidArgument("seg_loss: undefined operand");
  if (logits.shape() != labels.shape())
    throw InvalidArgument("seg_loss: logits/labels shapes differ");
  for (double v : labels.data()) {
    if (v != 0.0 && v != 1.0)
      throw InvalidArgument("seg_loss: labels must be binary");
  }
  const Tensor y = labels.detach();
  const Tensor p = clamped_sigmoid(logits);
  const Tensor ll =
      add(mul(y, log(p)), mul(one_minus(y), log(one_minus(p))));
  return scale(mean_all(ll), -1.0);
}

Tensor soft_dice_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.shape() != labels.shape())
    throw InvalidArgument("soft_dice_loss: logits/labels shapes differ");
  const double smooth = 1.0;
  const Tensor p = sigmoid(logits);
  const Tensor y = labels.detach();
  const std::vector<int> spatial{1, 2};
  const Tensor overlap = sum(mul(p, y), spatial);        // per class
  const Tensor p_sum = sum(p, spatial);
  const Tensor y_sum = sum(y, spatial);
  const Tensor num = add(scale(overlap, 2.0), smooth);
  const Tensor den = add(add(p_sum, y_sum), smooth);
  const Tensor dice = div(num, den);
  return mean_all(sub(Tensor::ones(dice.shape()), dice));
}

Tensor single_path_mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw InvalidArgument("single_path_mse: shapes differ");
  if (pred.rank() != 3)
    throw InvalidArgument("single_path_mse: representations must be CxHxW");
  const double cell_count = static_cast<double>(pred.dim(1) * pred.dim(2));
  return scale(sq_norm(sub(pred, target.detach())), 1.0 / cell_count);
}

LossBreakdown total_loss(const ForwardBundle& bundle, const Tensor& labels,
                         const TotalLossOptions& options) {
  if (!bundle.logits_ss.defined() || !bundle.f_cam_s.defined() ||
      !bundle.f_dec_s.defined())
    throw ContractViolation("total_loss: bundle is missing student outputs");
  const bool any_distill = options.toggles.fld || options.toggles.dld ||
                           options.toggles.lld_base || options.toggles.lld_aux;
  if (any_distill && !bundle.has_teacher())
    throw ContractViolation("total_loss: bundle is missing teacher outputs");
  if (any_distill && bundle.has_teacher() && !bundle.logits_s_t.defined())
    throw ContractViolation("total_loss: bundle is missing cross-head logits");
  if (bundle.has_ta() && !bundle.complete())
    throw ContractViolation("total_loss: bundle is incomplete");

  const LossWeights& w = options.weights;
  LossBreakdown out;
  out.seg = seg_loss(bundle.logits_ss, labels);
  if (options.use_dice)
    out.seg = add(out.seg, soft_dice_loss(bundle.logits_ss, labels));

  const Tensor zero = Tensor::scalar(0.0);
  out.fld = zero;
  out.dld = zero;
  out.lld_base = zero;
  out.lld_aux = zero;

  if (bundle.has_ta()) {
    if (options.toggles.fld) {
      out.fld_terms = fld_loss(bundle.f_fus_t, bundle.f_fus_ta, bundle.f_cam_s);
      out.fld = out.fld_terms.weighted_total;
    }
    if (options.toggles.dld) {
      out.dld_terms = dld_loss(bundle.f_dec_t, bundle.f_dec_ta, bundle.f_dec_s);
      out.dld = out.dld_terms.weighted_total;
    }
    if (options.toggles.lld_base) {
      out.lld_terms =
          lld_base(bundle.logits_tt, bundle.logits_tata, bundle.logits_ss);
      out.lld_base = out.lld_terms.weighted_total;
    }
    if (options.toggles.lld_aux)
      out.lld_aux = lld_aux(bundle.logits_tt, bundle.logits_s_t,
                            bundle.logits_tata, bundle.logits_s_ta);
  } else if (any_distill) {
    // no-TA ablation: each level collapses to the direct path, weight 1
    if (options.toggles.fld)
      out.fld = single_path_mse(bundle.f_cam_s, bundle.f_fus_t);
    if (options.toggles.dld)
      out.dld = single_path_mse(bundle.f_dec_s, bundle.f_dec_t);
    if (options.toggles.lld_base)
      out.lld_base = single_path_mse(bundle.logits_ss, bundle.logits_tt);
    if (options.toggles.lld_aux)
      out.lld_aux = bernoulli_kl(bundle.logits_tt, bundle.logits_s_t);
  }

  // Zero-weight or toggled-off terms stay out of the total graph, so their
  // (absent) gradients cannot perturb the remaining paths.
  Tensor total = out.seg;
  if (options.ta_seg && bundle.has_ta())
    total = add(total, seg_loss(bundle.logits_tata, labels));
  if (options.toggles.fld && w.lambda1 != 0.0)
    total = add(total, scale(out.fld, w.lambda1));
  if (options.toggles.dld && w.lambda2 != 0.0)
    total = add(total, scale(out.dld, w.lambda2));
  if (w.lambda3 != 0.0) {
    if (options.toggles.lld_base)
      total = add(total, scale(out.lld_base, w.lambda3));
    if (options.toggles.lld_aux)
      total = add(total, scale(out.lld_aux, w.lambda3));
  }
  out.total = total;
  return out;
}

}  // namespace bridgeta
