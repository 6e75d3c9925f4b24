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

#ifndef BRIDGETA_LOSSES_HPP_
#define BRIDGETA_LOSSES_HPP_

#include "bridgeta/models.hpp"
#include "bridgeta/tensor.hpp"

namespace bridgeta {

// Dual-path distillation. The direct student-teacher squared gap is upper-
// bounded by (1 + eps) * ||R_S - R_TA||^2 + (1 + 1/eps) * ||R_TA - R_T||^2
// for every eps > 0; eps* = b/a makes the bound tight at (a + b)^2. The
// training losses below are the per-cell-mean versions of the two sides,
// with eps* recomputed from detached norms each step and then held constant
// for differentiation.

inline constexpr double kEpsStarMin = 1e-3;
inline constexpr double kEpsStarMax = 1e3;
inline constexpr double kProbClamp = 1e-7;

struct DualPathTerms {
  double a = 0.0;         // ||R_S - R_TA||_F, detached
  double b = 0.0;         // ||R_TA - R_T||_F, detached
  double eps_star = 0.0;  // clamped to [kEpsStarMin, kEpsStarMax]
  Tensor loss_ta2s;       // per-cell-mean ||R_S - detach(R_TA)||^2
  Tensor loss_t2ta;       // per-cell-mean ||R_TA - detach(R_T)||^2
  Tensor weighted_total;  // (1+eps*)*loss_ta2s + (1+1/eps*)*loss_t2ta
};

struct LossWeights {
  double lambda1 = 1.0;  // feature level
  double lambda2 = 1.0;  // decoded level
  double lambda3 = 1.0;  // logit level
};

struct LevelToggles {
  bool fld = true;
  bool dld = true;
  bool lld_base = true;
  bool lld_aux = true;
};

struct TotalLossOptions {
  LossWeights weights;
  LevelToggles toggles;
  bool use_dice = false;  // adds a soft-Dice term to the segmentation loss
  bool ta_seg = false;    // experimental: segmentation supervision on the TA
};

struct LossBreakdown {
  Tensor seg;
  Tensor fld, dld, lld_base, lld_aux;  // unweighted level values
  Tensor total;                        // seg + l1*fld + l2*dld + l3*(base+aux)
  DualPathTerms fld_terms, dld_terms, lld_terms;  // dual-path mode only
};

/// (1 + eps) * ||x||^2 + (1 + 1/eps) * ||y||^2 as a plain value; the
/// right-hand side of the generalized bound, for verification sweeps.
double young_rhs(const Tensor& x, const Tensor& y, double eps);

/// clamp(b / a, 1e-3, 1e3), with a ~ 0 resolving to the upper clamp and
/// b ~ 0 (a nonzero) to the lower clamp.
double epsilon_star(double a, double b);

/// f(eps) = (1 + eps) * a^2 + (1 + 1/eps) * b^2.
double f_objective(double a, double b, double eps);

/// The shared dual-path template over same-shape C x H x W representations.
DualPathTerms dual_path_mse(const Tensor& r_student, const Tensor& r_ta,
                            const Tensor& r_teacher);

/// Feature level: (R_T, R_TA, R_S) = (F_fus_T, F_fus_TA, F_cam_S).
DualPathTerms fld_loss(const Tensor& f_fus_t, const Tensor& f_fus_ta,
                       const Tensor& f_cam_s);

/// Decoded level: (R_T, R_TA, R_S) = (F_dec_T, F_dec_TA, F_dec_S).
DualPathTerms dld_loss(const Tensor& f_dec_t, const Tensor& f_dec_ta,
                       const Tensor& f_dec_s);

/// Logit level base term over the three own-head logit maps.
DualPathTerms lld_base(const Tensor& logits_tt, const Tensor& logits_tata,
                       const Tensor& logits_ss);

/// Mean per-cell KL(Bern(sigma(p)) || Bern(sigma(q))) with probabilities
/// clamped to [1e-7, 1 - 1e-7]. p is the target side and is detached.
Tensor bernoulli_kl(const Tensor& p_logits, const Tensor& q_logits);

/// KL(L_TT || L_S_T) + KL(L_TATA || L_S_TA). Gradient reaches the student
/// only through the cross-head logits.
Tensor lld_aux(const Tensor& logits_tt, const Tensor& logits_s_t,
               const Tensor& logits_tata, const Tensor& logits_s_ta);

/// Mean per-class per-pixel binary cross-entropy on sigmoid probabilities.
/// Labels must be exactly {0, 1}.
Tensor seg_loss(const Tensor& logits, const Tensor& labels);

/// 1 - mean_c (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps); optional
/// segmentation add-on.
Tensor soft_dice_loss(const Tensor& logits, const Tensor& labels);

/// Per-cell-mean squared distance to a detached target; the collapsed
/// single-path loss used by the no-TA ablation.
Tensor single_path_mse(const Tensor& pred, const Tensor& target);

/// Assembles the full objective from a forward bundle. With a TA present
/// each level uses the dual-path template; without one (no-TA ablation)
/// each level collapses to direct teacher-student MSE and the auxiliary
/// term keeps only KL(L_TT || L_S_T). Terms whose effective weight is zero
/// are left out of the total graph entirely.
LossBreakdown total_loss(const ForwardBundle& bundle, const Tensor& labels,
                         const TotalLossOptions& options = {});

}  // namespace bridgeta

#endif  // BRIDGETA_LOSSES_HPP_
