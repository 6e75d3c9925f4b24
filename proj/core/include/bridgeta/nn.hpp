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

#ifndef BRIDGETA_NN_HPP_
#define BRIDGETA_NN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bridgeta/tensor.hpp"

namespace bridgeta {

enum class Activation { kNone, kRelu };

/// A conv2d + optional ReLU block. Shape preserving when
/// padding == (k - 1) / 2.
struct ConvLayer {
  Tensor kernel;  // C_out x C_in x k x k
  Tensor bias;    // C_out
  int padding = 0;
  Activation activation = Activation::kNone;

  Tensor forward(const Tensor& x) const;
};

/// Ordered name -> parameter map. Iteration follows insertion order, which
/// pins checkpoint layout and optimizer update order. Frozen entries are
/// excluded from updates and never accumulate gradient.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool frozen = false;
  };

  void add(std::string name, Tensor tensor, bool frozen = false);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  bool is_frozen(std::string_view name) const;
  void set_frozen(std::string_view name, bool frozen);
  void freeze_all();

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Allocates zeroed grad buffers for all unfrozen entries, establishing
  /// the adam_step precondition even for parameters the loss never touched.
  void ensure_grad_buffers();
  void zero_grads();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}
  const AdamConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }

 private:
  friend void adam_step(ParamRegistry&, AdamState&, double);
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

/// One Adam update over all unfrozen parameters, then gradient reset for
/// every entry. Throws ContractViolation if an unfrozen parameter has no
/// gradient buffer.
void adam_step(ParamRegistry& registry, AdamState& state, double lr);

struct CosineSchedule {
  double base_lr = 1e-4;
  int total_epochs = 20;
  double min_lr = 0.0;
};

/// min_lr + 0.5 * (base_lr - min_lr) * (1 + cos(pi * epoch / total)).
/// epoch must lie in [0, total_epochs].
double lr_at(const CosineSchedule& schedule, double epoch);

// Checkpoint file: little-endian; magic "BTCK", u32 version = 1,
// u32 entry count; per entry: u16 name length, UTF-8 name, u8 frozen flag,
// u8 rank, u32 dims[rank], f64 data[product(dims)].
void save_checkpoint(const ParamRegistry& registry,
                     const std::filesystem::path& path);
ParamRegistry load_checkpoint(const std::filesystem::path& path);
/// Loads values and frozen flags into an existing registry; names and
/// shapes must match exactly (models keep their layer wiring).
void load_checkpoint_into(ParamRegistry& registry,
                          const std::filesystem::path& path);

std::int64_t param_count(const ParamRegistry& registry, bool frozen_included);

/// Registry view over entries whose name starts with `prefix`; handles are
/// shared with the source, so saving the subset snapshots live values.
ParamRegistry subset_by_prefix(const ParamRegistry& registry,
                               std::string_view prefix);

/// Kernel entries uniform in [-s, s] with s = sqrt(1 / (C_in * k * k)),
/// bias zero. The stream is derived from (seed, name), so initialization
/// does not depend on construction order.
ConvLayer make_conv_layer(ParamRegistry& registry, const std::string& name,
                          std::int64_t c_in, std::int64_t c_out,
                          std::int64_t k, int padding, Activation activation,
                          std::uint64_t seed);

}  // namespace bridgeta

#endif  // BRIDGETA_NN_HPP_
