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

#ifndef BRIDGETA_TENSOR_HPP_
#define BRIDGETA_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace bridgeta {

using Shape = std::vector<std::int64_t>;

class Tape;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty means "no gradient accumulated yet"
  bool requires_grad = false;
  Tape* tape = nullptr;     // tape this value was recorded on, if any
  std::int64_t node = -1;   // index of the producing node on that tape
};
}  // namespace detail

/// Dense row-major f64 tensor. Value-semantics handle: copies share storage.
/// Rank 0 (empty shape) is a scalar. All arithmetic records onto the active
/// Tape when some input requires a gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  /// Direct write access to the value buffer. Intended for leaves
  /// (parameters, dataset grids); mutating a tape-recorded intermediate
  /// invalidates its backward rule.
  std::span<double> mutable_data();

  /// The single value of a scalar (numel == 1) tensor.
  double value() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Drops the gradient buffer ("absent" state).
  void zero_grad();
  /// Allocates a zeroed gradient buffer if absent. No-op unless
  /// requires_grad.
  void ensure_grad();
  void accumulate_grad(std::span<const double> contribution);

  /// Same values, requires_grad == false, no tape linkage. Idempotent.
  Tensor detach() const;
  /// Deep copy with no tape linkage; keeps requires_grad.
  Tensor clone() const;

  std::shared_ptr<detail::TensorData> impl() const { return impl_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorData> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorData> impl_;
};

/// Reverse-mode differentiation tape. Constructing a Tape makes it the
/// active tape for the current thread (stack discipline, restored on
/// destruction); operators record nodes on it while any input requires a
/// gradient. One tape per training step, discarded after the update.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t size() const { return nodes_.size(); }

  struct Node {
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void()> backward;
  };

  const Node& node(std::int64_t index) const { return nodes_[index]; }

  /// Registers a node and links the output tensor to it.
  void record(std::vector<std::shared_ptr<detail::TensorData>> inputs,
              const Tensor& output, std::function<void()> backward);

 private:
  friend void backward(const Tensor&);
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

// ---- elementwise arithmetic (no broadcasting beyond scalar) ----
Tensor add(const Tensor& x, const Tensor& y);
Tensor add(const Tensor& x, double c);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, double c);
Tensor mul(const Tensor& x, const Tensor& y);
/// Elementwise quotient; y entries must be nonzero.
Tensor div(const Tensor& x, const Tensor& y);
Tensor scale(const Tensor& x, double c);

// ---- nonlinearities ----
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Natural log; every entry must be strictly positive (callers clamp).
Tensor log(const Tensor& x);
/// Clamp to [lo, hi]; gradient passes through strictly inside the range.
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- convolution ----
/// Cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
/// kernel (k odd) plus per-channel bias, zero padding on both sides.
/// Output is C_out x (H + 2*padding - k + 1) x (W + 2*padding - k + 1).
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding);

// ---- structure ----
/// Concatenates C_i x H x W tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> xs);

// ---- reductions ----
Tensor sum(const Tensor& x, std::span<const int> axes);
Tensor mean(const Tensor& x, std::span<const int> axes);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Sum of squares of all entries, as a scalar tensor.
Tensor sq_norm(const Tensor& x);

/// Accumulates d(loss)/d(t) into the grad buffer of every requires_grad
/// ancestor of `loss`, visiting tape nodes once each in reverse recording
/// order. `loss` must be scalar.
void backward(const Tensor& loss);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::int64_t entries_checked = 0;
  bool passed = false;
};

/// Central-difference check of the analytic gradient of a scalar-valued
/// function at x. Relative error uses denominator max(1, |analytic|,
/// |numeric|) so near-zero gradients are compared absolutely.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol);

}  // namespace bridgeta

#endif  // BRIDGETA_TENSOR_HPP_
