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

#include "bridgeta/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "bridgeta/errors.hpp"
#include "wire.hpp"

namespace bridgeta {

std::string format_metric(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string metrics_csv_header(int n_classes) {
  std::string out = "run_id,mode,epoch,split";
  for (int c = 0; c < n_classes; ++c)
    out += ",iou_class_" + std::to_string(c);
  out +=
      ",miou,loss_seg,loss_fld,loss_dld,loss_lld_base,loss_lld_aux,"
      "loss_total,gap_feat,gap_dec,gap_logit,lr,seconds";
  return out;
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string out = r.run_id + "," + r.mode + "," + std::to_string(r.epoch) +
                    "," + r.split;
  for (double iou : r.iou) out += "," + format_metric(iou);
  for (double v : {r.miou, r.loss_seg, r.loss_fld, r.loss_dld, r.loss_lld_base,
                   r.loss_lld_aux, r.loss_total, r.gap_feat, r.gap_dec,
                   r.gap_logit, r.lr, r.seconds})
    out += "," + format_metric(v);
  return out;
}

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsRecord> records, int n_classes) {
  std::string out = metrics_csv_header(n_classes) + "\n";
  for (const MetricsRecord& r : records) {
    if (static_cast<int>(r.iou.size()) != n_classes)
      throw InvalidArgument("metrics: record class count mismatch");
    out += metrics_csv_row(r) + "\n";
  }
  wire::write_file(path, out);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw FormatError(context + ": bad float '" + s + "'");
  return v;
}

}  // namespace

std::vector<MetricsRecord> read_metrics_csv(
    const std::filesystem::path& path) {
  const std::string bytes = wire::read_file(path);
  std::stringstream ss(bytes);
  std::string line;
  if (!std::getline(ss, line))
    throw FormatError("metrics " + path.string() + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);
  int n_classes = 0;
  for (const std::string& h : header)
    if (h.rfind("iou_class_", 0) == 0) ++n_classes;
  if (n_classes == 0 || header.size() != 16 + static_cast<std::size_t>(n_classes))
    throw FormatError("metrics " + path.string() + ": unexpected header");

  std::vector<MetricsRecord> records;
  const std::string context = "metrics " + path.string();
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size())
      throw FormatError(context + ": row has " + std::to_string(f.size()) +
                        " fields, expected " + std::to_string(header.size()));
    MetricsRecord r;
    std::size_t i = 0;
    r.run_id = f[i++];
    r.mode = f[i++];
    r.epoch = static_cast<int>(parse_double(f[i++], context));
    r.split = f[i++];
    for (int c = 0; c < n_classes; ++c)
      r.iou.push_back(parse_double(f[i++], context));
    r.miou = parse_double(f[i++], context);
    r.loss_seg = parse_double(f[i++], context);
    r.loss_fld = parse_double(f[i++], context);
    r.loss_dld = parse_double(f[i++], context);
    r.loss_lld_base = parse_double(f[i++], context);
    r.loss_lld_aux = parse_double(f[i++], context);
    r.loss_total = parse_double(f[i++], context);
    r.gap_feat = parse_double(f[i++], context);
    r.gap_dec = parse_double(f[i++], context);
    r.gap_logit = parse_double(f[i++], context);
    r.lr = parse_double(f[i++], context);
    r.seconds = parse_double(f[i++], context);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace bridgeta
