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

#include <algorithm>
#include <json.hpp>
#include <map>

#include "bridgeta/errors.hpp"
#include "bridgeta/harness.hpp"
#include "bridgeta/metrics.hpp"
#include "wire.hpp"

namespace bridgeta {

namespace {

using json = nlohmann::ordered_json;

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct RunData {
  std::string run_id;
  std::string mode;
  std::vector<MetricsRecord> records;  // this run's rows
};

}  // namespace

void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw InvalidArgument("report: no run directories");
  std::filesystem::create_directories(out_dir);

  std::vector<RunData> runs;
  int n_classes = -1;
  for (const auto& dir : run_dirs) {
    const std::filesystem::path csv = dir / "metrics.csv";
    if (!std::filesystem::exists(csv))
      throw FormatError("report: missing " + csv.string());
    RunData run;
    run.records = read_metrics_csv(csv);
    if (run.records.empty())
      throw FormatError("report: no records in " + csv.string());
    run.run_id = run.records.front().run_id;
    run.mode = run.records.front().mode;
    const int classes = static_cast<int>(run.records.front().iou.size());
    if (n_classes == -1) n_classes = classes;
    if (classes != n_classes)
      throw FormatError("report: incompatible class counts across runs");
    runs.push_back(std::move(run));
  }
  std::sort(runs.begin(), runs.end(),
            [](const RunData& a, const RunData& b) {
              return a.run_id < b.run_id;
            });

  // merged per-epoch CSV, rows ordered by (run_id, split, epoch)
  std::vector<MetricsRecord> merged;
  for (const RunData& run : runs) {
    std::vector<MetricsRecord> sorted = run.records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const MetricsRecord& a, const MetricsRecord& b) {
                       if (a.split != b.split) return a.split < b.split;
                       return a.epoch < b.epoch;
                     });
    for (auto& r : sorted) merged.push_back(std::move(r));
  }
  write_metrics_csv(out_dir / "merged.csv", merged, n_classes);

  // comparison summary
  json runs_json;
  std::map<std::string, std::vector<double>> final_miou_by_mode;
  for (const RunData& run : runs) {
    const MetricsRecord* final_val = nullptr;
    json gap_feat = json::array(), gap_dec = json::array(),
         gap_logit = json::array(), val_miou = json::array();
    for (const MetricsRecord& r : run.records) {
      if (r.split != "val") continue;
      gap_feat.push_back(r.gap_feat);
      gap_dec.push_back(r.gap_dec);
      gap_logit.push_back(r.gap_logit);
      val_miou.push_back(r.miou);
      if (final_val == nullptr || r.epoch > final_val->epoch) final_val = &r;
    }
    if (final_val == nullptr)
      throw FormatError("report: run " + run.run_id + " has no val records");
    json entry;
    entry["mode"] = run.mode;
    entry["final_val_miou"] = final_val->miou;
    entry["final_val_iou"] = final_val->iou;
    entry["val_miou_curve"] = val_miou;
    entry["gap_curves"] = {{"feature", gap_feat},
                           {"decoded", gap_dec},
                           {"logit", gap_logit}};
    runs_json[run.run_id] = entry;
    final_miou_by_mode[run.mode].push_back(final_val->miou);
  }

  json modes_json;
  for (const auto& [mode, mious] : final_miou_by_mode) {
    json entry;
    entry["runs"] = static_cast<int>(mious.size());
    entry["final_val_miou_median"] = median(mious);
    modes_json[mode] = entry;
  }

  json deltas;
  auto mode_median = [&](const char* mode) -> std::optional<double> {
    auto it = final_miou_by_mode.find(mode);
    if (it == final_miou_by_mode.end()) return std::nullopt;
    return median(it->second);
  };
  const auto baseline = mode_median("baseline");
  const auto bridgeta = mode_median("bridgeta");
  const auto no_ta = mode_median("no_ta");
  const auto teacher = mode_median("teacher");
  if (baseline && bridgeta)
    deltas["bridgeta_minus_baseline"] = *bridgeta - *baseline;
  if (bridgeta && no_ta) deltas["bridgeta_minus_no_ta"] = *bridgeta - *no_ta;
  if (teacher && baseline)
    deltas["teacher_minus_baseline"] = *teacher - *baseline;

  json report;
  report["runs"] = runs_json;
  report["modes"] = modes_json;
  report["deltas"] = deltas;
  wire::write_file(out_dir / "comparison.json", report.dump(2) + "\n");
}

}  // namespace bridgeta
