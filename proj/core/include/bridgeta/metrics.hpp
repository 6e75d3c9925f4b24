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

#ifndef BRIDGETA_METRICS_HPP_
#define BRIDGETA_METRICS_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bridgeta {

/// One logged (run, epoch, split) observation. Gap fields hold the
/// per-cell-mean squared teacher-student distance at each level, the same
/// normalization as the dual-path losses, so "gap <= weighted level loss"
/// is checkable row by row.
struct MetricsRecord {
  std::string run_id;
  std::string mode;  // teacher | baseline | bridgeta | no_ta
  int epoch = 0;
  std::string split;  // train | val
  std::vector<double> iou;
  double miou = 0.0;
  double loss_seg = 0.0;
  double loss_fld = 0.0;
  double loss_dld = 0.0;
  double loss_lld_base = 0.0;
  double loss_lld_aux = 0.0;
  double loss_total = 0.0;
  double gap_feat = 0.0;
  double gap_dec = 0.0;
  double gap_logit = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// Columns: run_id, mode, epoch, split, iou_class_0..iou_class_{N_c-1},
// miou, loss_seg, loss_fld, loss_dld, loss_lld_base, loss_lld_aux,
// loss_total, gap_feat, gap_dec, gap_logit, lr, seconds.
// Floats are written with 17 significant digits (value-preserving round
// trip), so derived quantities recomputed from a parsed CSV match exactly.

std::string metrics_csv_header(int n_classes);
std::string metrics_csv_row(const MetricsRecord& record);

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsRecord> records, int n_classes);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

/// %.17g, the formatting used for every float column.
std::string format_metric(double value);

}  // namespace bridgeta

#endif  // BRIDGETA_METRICS_HPP_
