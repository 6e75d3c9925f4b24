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

#include "bridgeta/nn.hpp"

#include <cmath>
#include <cstring>

#include "bridgeta/errors.hpp"
#include "bridgeta/rng.hpp"
#include "wire.hpp"

namespace bridgeta {

// ---------------------------------------------------------------------------
// ConvLayer
// ---------------------------------------------------------------------------

Tensor ConvLayer::forward(const Tensor& x) const {
  Tensor y = conv2d(x, kernel, bias, padding);
  if (activation == Activation::kRelu) y = relu(y);
  return y;
}

// ---------------------------------------------------------------------------
// ParamRegistry
// ---------------------------------------------------------------------------

void ParamRegistry::add(std::string name, Tensor tensor, bool frozen) {
  if (index_.count(name))
    throw InvalidArgument("registry: duplicate parameter name '" + name + "'");
  if (!tensor.defined())
    throw InvalidArgument("registry: undefined tensor for '" + name + "'");
  tensor.set_requires_grad(!frozen);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(tensor), frozen});
}

bool ParamRegistry::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

Tensor& ParamRegistry::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw InvalidArgument("registry: unknown parameter '" + std::string(name) +
                          "'");
  return entries_[it->second].tensor;
}

const Tensor& ParamRegistry::get(std::string_view name) const {
  return const_cast<ParamRegistry*>(this)->get(name);
}

bool ParamRegistry::is_frozen(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw InvalidArgument("registry: unknown parameter '" + std::string(name) +
                          "'");
  return entries_[it->second].frozen;
}

void ParamRegistry::set_frozen(std::string_view name, bool frozen) {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw InvalidArgument("registry: unknown parameter '" + std::string(name) +
                          "'");
  Entry& e = entries_[it->second];
  e.frozen = frozen;
  e.tensor.set_requires_grad(!frozen);
}

void ParamRegistry::freeze_all() {
  for (Entry& e : entries_) {
    e.frozen = true;
    e.tensor.set_requires_grad(false);
  }
}

void ParamRegistry::ensure_grad_buffers() {
  for (Entry& e : entries_) {
    if (!e.frozen) e.tensor.ensure_grad();
  }
}

void ParamRegistry::zero_grads() {
  for (Entry& e : entries_) e.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(ParamRegistry& registry, AdamState& state, double lr) {
  state.step_ += 1;
  const AdamConfig& cfg = state.config_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_));
  for (const auto& entry : registry.entries()) {
    Tensor tensor = entry.tensor;  // shared handle; updates hit the storage
    if (entry.frozen) {
      tensor.zero_grad();  // accumulation, if any, is discarded
      continue;
    }
    if (!tensor.has_grad())
      throw ContractViolation("adam_step: missing gradient for unfrozen '" +
                              entry.name + "'");
    auto& moments = state.moments_[entry.name];
    const std::size_t n = tensor.data().size();
    if (moments.m.empty()) {
      moments.m.assign(n, 0.0);
      moments.v.assign(n, 0.0);
    }
    auto values = tensor.mutable_data();
    auto grad = tensor.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
      moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = moments.m[i] / bc1;
      const double v_hat = moments.v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    tensor.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Cosine schedule
// ---------------------------------------------------------------------------

double lr_at(const CosineSchedule& schedule, double epoch) {
  if (schedule.total_epochs <= 0)
    throw InvalidArgument("lr_at: total_epochs must be positive");
  if (epoch < 0.0 || epoch > static_cast<double>(schedule.total_epochs))
    throw InvalidArgument("lr_at: epoch outside [0, total_epochs]");
  const double t = epoch / static_cast<double>(schedule.total_epochs);
  return schedule.min_lr +
         0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(M_PI * t));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'B', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

ParamRegistry parse_checkpoint(const std::string& bytes,
                               const std::string& context) {
  wire::Reader r(bytes, context);
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError(context + ": bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError(context + ": unsupported version " +
                      std::to_string(version));
  const std::uint32_t count = r.u32("entry count");
  ParamRegistry registry;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string tag = "entry " + std::to_string(i);
    const std::uint16_t name_len = r.u16(tag + " name length");
    const std::string name = r.str(name_len, tag + " name");
    const std::uint8_t frozen = r.u8("frozen flag of '" + name + "'");
    const std::uint8_t rank = r.u8("rank of '" + name + "'");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d)
      shape.push_back(
          static_cast<std::int64_t>(r.u32("dims of '" + name + "'")));
    std::int64_t numel = 1;
    for (std::int64_t d : shape) numel *= d;
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (std::int64_t j = 0; j < numel; ++j)
      values[static_cast<std::size_t>(j)] = r.f64("data of '" + name + "'");
    registry.add(name, Tensor::from_data(shape, std::move(values)),
                 frozen != 0);
  }
  if (!r.at_end())
    throw FormatError(context + ": trailing bytes after entries");
  return registry;
}

}  // namespace

void save_checkpoint(const ParamRegistry& registry,
                     const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  wire::put_u32(out, kVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(registry.size()));
  for (const auto& entry : registry.entries()) {
    if (entry.name.size() > 0xffff)
      throw InvalidArgument("checkpoint: parameter name too long");
    wire::put_u16(out, static_cast<std::uint16_t>(entry.name.size()));
    out.append(entry.name);
    out.push_back(entry.frozen ? 1 : 0);
    const Shape& shape = entry.tensor.shape();
    out.push_back(static_cast<char>(shape.size()));
    for (std::int64_t dim : shape)
      wire::put_u32(out, static_cast<std::uint32_t>(dim));
    for (double v : entry.tensor.data()) wire::put_f64(out, v);
  }
  wire::write_file(path, out);
}

ParamRegistry load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(wire::read_file(path), "checkpoint " + path.string());
}

void load_checkpoint_into(ParamRegistry& registry,
                          const std::filesystem::path& path) {
  ParamRegistry loaded =
      parse_checkpoint(wire::read_file(path), "checkpoint " + path.string());
  if (loaded.size() != registry.size())
    throw FormatError("checkpoint " + path.string() + ": has " +
                      std::to_string(loaded.size()) +
                      " entries, registry has " +
                      std::to_string(registry.size()));
  for (const auto& entry : loaded.entries()) {
    if (!registry.contains(entry.name))
      throw FormatError("checkpoint " + path.string() +
                        ": unexpected parameter '" + entry.name + "'");
    Tensor& target = registry.get(entry.name);
    if (target.shape() != entry.tensor.shape())
      throw FormatError("checkpoint " + path.string() +
                        ": shape mismatch for '" + entry.name + "'");
    auto dst = target.mutable_data();
    auto src = entry.tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
    registry.set_frozen(entry.name, entry.frozen);
  }
}

std::int64_t param_count(const ParamRegistry& registry, bool frozen_included) {
  std::int64_t total = 0;
  for (const auto& entry : registry.entries()) {
    if (!frozen_included && entry.frozen) continue;
    total += entry.tensor.numel();
  }
  return total;
}

ParamRegistry subset_by_prefix(const ParamRegistry& registry,
                               std::string_view prefix) {
  ParamRegistry out;
  for (const auto& entry : registry.entries()) {
    if (entry.name.rfind(prefix, 0) == 0)
      out.add(entry.name, entry.tensor, entry.frozen);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

ConvLayer make_conv_layer(ParamRegistry& registry, const std::string& name,
                          std::int64_t c_in, std::int64_t c_out,
                          std::int64_t k, int padding, Activation activation,
                          std::uint64_t seed) {
  if (c_in <= 0 || c_out <= 0 || k <= 0 || k % 2 == 0)
    throw InvalidArgument("make_conv_layer: bad dimensions for '" + name + "'");
  const std::string kernel_name = name + ".kernel";
  // Scale-preserving uniform init: gain 6 compensates the ReLU energy
  // halving, gain 3 keeps unit variance through linear (head) layers.
  const double gain = activation == Activation::kRelu ? 6.0 : 3.0;
  const double s = std::sqrt(gain / static_cast<double>(c_in * k * k));
  Rng rng(derive_seed(seed, kernel_name));
  std::vector<double> weights(static_cast<std::size_t>(c_out * c_in * k * k));
  for (double& w : weights) w = rng.uniform(-s, s);
  ConvLayer layer;
  layer.kernel = Tensor::from_data({c_out, c_in, k, k}, std::move(weights));
  layer.bias = Tensor::zeros({c_out});
  layer.padding = padding;
  layer.activation = activation;
  registry.add(kernel_name, layer.kernel);
  registry.add(name + ".bias", layer.bias);
  return layer;
}

}  // namespace bridgeta
