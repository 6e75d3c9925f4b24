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

#include "bridgeta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "bridgeta/errors.hpp"

namespace bridgeta {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

void check_shape(const Shape& shape) {
  for (std::int64_t d : shape) {
    if (d <= 0) throw InvalidArgument("tensor dimensions must be positive");
  }
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined())
    throw InvalidArgument(std::string(op) + ": undefined tensor operand");
}

void check_same_shape(const Tensor& x, const Tensor& y, const char* op) {
  if (x.shape() != y.shape())
    throw InvalidArgument(std::string(op) + ": operand shapes differ");
}

using DataPtr = std::shared_ptr<detail::TensorData>;

void accum(const DataPtr& t, std::span<const double> g) {
  if (!t->requires_grad) return;
  if (t->grad.empty()) {
    t->grad.assign(g.begin(), g.end());
    return;
  }
  double* dst = t->grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

/// Records the result on the active tape iff grad mode applies.
template <typename BackwardFn>
void maybe_record(std::vector<DataPtr> inputs, Tensor& result,
                  BackwardFn&& backward_fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (!any) return;
  result.set_requires_grad(true);
  tape->record(std::move(inputs), result,
               std::forward<BackwardFn>(backward_fn));
}

struct NoTapeGuard {
  Tape* saved;
  NoTapeGuard() : saved(g_active_tape) { g_active_tape = nullptr; }
  ~NoTapeGuard() { g_active_tape = saved; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw InvalidArgument("from_data: value count does not match shape");
  auto impl = std::make_shared<detail::TensorData>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  return from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), value);
  return from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) throw InvalidArgument("dim: axis out of range");
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl_->values.size());
}

std::span<const double> Tensor::data() const { return impl_->values; }

std::span<double> Tensor::mutable_data() { return impl_->values; }

double Tensor::value() const {
  if (numel() != 1) throw InvalidArgument("value: tensor is not scalar");
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  impl_->requires_grad = requires_grad;
  if (!requires_grad) impl_->grad.clear();
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty())
    throw ContractViolation("grad: no gradient accumulated for this tensor");
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::ensure_grad() {
  if (!impl_->requires_grad) return;
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> contribution) {
  if (contribution.size() != impl_->values.size())
    throw InvalidArgument("accumulate_grad: contribution shape mismatch");
  accum(impl_, contribution);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorData>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorData>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  // Unlink outputs so a handle that outlives its step cannot reach freed
  // nodes through a stale tape pointer.
  for (Node& node : nodes_) {
    node.output->tape = nullptr;
    node.output->node = -1;
  }
  g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<DataPtr> inputs, const Tensor& output,
                  std::function<void()> backward) {
  Node node;
  node.inputs = std::move(inputs);
  node.output = output.impl();
  node.backward = std::move(backward);
  node.output->tape = this;
  node.output->node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(std::move(node));
}

void backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.numel() != 1)
    throw InvalidArgument("backward: loss must be scalar");
  if (!loss.requires_grad()) return;  // fully detached graph: nothing to do
  const double seed = 1.0;
  accum(loss.impl(), std::span<const double>(&seed, 1));
  Tape* tape = loss.impl()->tape;
  if (tape == nullptr) return;  // requires_grad leaf used directly as loss
  for (std::int64_t i = loss.impl()->node; i >= 0; --i) {
    const Tape::Node& node = tape->nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;  // does not feed the loss
    node.backward();
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

Tensor add(const Tensor& x, const Tensor& y) {
  check_defined(x, "add");
  check_defined(y, "add");
  check_same_shape(x, y, "add");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  const double* b = y.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl(), oi = result.impl();
  maybe_record({xi, yi}, result, [xi, yi, oi]() {
    accum(xi, oi->grad);
    accum(yi, oi->grad);
  });
  return result;
}

Tensor add(const Tensor& x, double c) {
  check_defined(x, "add");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + c;
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi]() { accum(xi, oi->grad); });
  return result;
}

Tensor sub(const Tensor& x, const Tensor& y) {
  check_defined(x, "sub");
  check_defined(y, "sub");
  check_same_shape(x, y, "sub");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  const double* b = y.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl(), oi = result.impl();
  maybe_record({xi, yi}, result, [xi, yi, oi]() {
    accum(xi, oi->grad);
    if (yi->requires_grad) {
      std::vector<double> g(oi->grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = -oi->grad[i];
      accum(yi, g);
    }
  });
  return result;
}

Tensor sub(const Tensor& x, double c) { return add(x, -c); }

Tensor mul(const Tensor& x, const Tensor& y) {
  check_defined(x, "mul");
  check_defined(y, "mul");
  check_same_shape(x, y, "mul");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  const double* b = y.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl(), oi = result.impl();
  maybe_record({xi, yi}, result, [xi, yi, oi]() {
    if (xi->requires_grad) {
      std::vector<double> g(oi->grad.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = oi->grad[i] * yi->values[i];
      accum(xi, g);
    }
    if (yi->requires_grad) {
      std::vector<double> g(oi->grad.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = oi->grad[i] * xi->values[i];
      accum(yi, g);
    }
  });
  return result;
}

Tensor div(const Tensor& x, const Tensor& y) {
  check_defined(x, "div");
  check_defined(y, "div");
  check_same_shape(x, y, "div");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  const double* b = y.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    if (b[i] == 0.0) throw DomainError("div: zero divisor at entry " +
                                       std::to_string(i));
    out[i] = a[i] / b[i];
  }
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl(), oi = result.impl();
  maybe_record({xi, yi}, result, [xi, yi, oi]() {
    if (xi->requires_grad) {
      std::vector<double> g(oi->grad.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = oi->grad[i] / yi->values[i];
      accum(xi, g);
    }
    if (yi->requires_grad) {
      std::vector<double> g(oi->grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double q = yi->values[i];
        g[i] = -oi->grad[i] * xi->values[i] / (q * q);
      }
      accum(yi, g);
    }
  });
  return result;
}

Tensor scale(const Tensor& x, double c) {
  check_defined(x, "scale");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi, c]() {
    std::vector<double> g(oi->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = oi->grad[i] * c;
    accum(xi, g);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  check_defined(x, "relu");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi]() {
    std::vector<double> g(oi->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = xi->values[i] > 0.0 ? oi->grad[i] : 0.0;
    accum(xi, g);
  });
  return result;
}

Tensor sigmoid(const Tensor& x) {
  check_defined(x, "sigmoid");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = a[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi]() {
    std::vector<double> g(oi->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = oi->values[i];
      g[i] = oi->grad[i] * y * (1.0 - y);
    }
    accum(xi, g);
  });
  return result;
}

Tensor log(const Tensor& x) {
  check_defined(x, "log");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(a[i] > 0.0))
      throw DomainError("log: entry " + std::to_string(i) +
                        " is not strictly positive");
    out[i] = std::log(a[i]);
  }
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi]() {
    std::vector<double> g(oi->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = oi->grad[i] / xi->values[i];
    accum(xi, g);
  });
  return result;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  check_defined(x, "clamp");
  if (!(lo <= hi)) throw InvalidArgument("clamp: lo must be <= hi");
  const std::size_t n = x.data().size();
  std::vector<double> out(n);
  const double* a = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(a[i], lo), hi);
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi, lo, hi]() {
    std::vector<double> g(oi->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->values[i];
      g[i] = (v > lo && v < hi) ? oi->grad[i] : 0.0;
    }
    accum(xi, g);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  std::int64_t c_in, h, w, c_out, k, pad, h_out, w_out;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel,
                   const Tensor& bias, int padding) {
  if (input.rank() != 3)
    throw InvalidArgument("conv2d: input must be C x H x W");
  if (kernel.rank() != 4)
    throw InvalidArgument("conv2d: kernel must be C_out x C_in x k x k");
  if (bias.rank() != 1) throw InvalidArgument("conv2d: bias must be rank 1");
  ConvDims d;
  d.c_in = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.c_out = kernel.dim(0);
  d.k = kernel.dim(2);
  d.pad = padding;
  if (kernel.dim(1) != d.c_in)
    throw InvalidArgument("conv2d: kernel input channels do not match input");
  if (kernel.dim(3) != d.k)
    throw InvalidArgument("conv2d: kernel must be square");
  if (d.k % 2 == 0) throw InvalidArgument("conv2d: kernel size must be odd");
  if (bias.dim(0) != d.c_out)
    throw InvalidArgument("conv2d: bias length does not match output channels");
  if (padding < 0) throw InvalidArgument("conv2d: padding must be >= 0");
  d.h_out = d.h + 2 * d.pad - d.k + 1;
  d.w_out = d.w + 2 * d.pad - d.k + 1;
  if (d.h_out <= 0 || d.w_out <= 0)
    throw InvalidArgument("conv2d: output spatial size is non-positive");
  return d;
}

// Valid output-row/col ranges for one kernel offset, so the inner loops
// touch only in-bounds input cells (zero padding contributes nothing).
inline void conv_ranges(std::int64_t extent, std::int64_t out_extent,
                        std::int64_t kpos, std::int64_t pad, std::int64_t* o0,
                        std::int64_t* o1) {
  *o0 = std::max<std::int64_t>(0, pad - kpos);
  *o1 = std::min<std::int64_t>(out_extent, extent + pad - kpos);
}

// Fused 3-tap row update: out[j] += w0*x[j] + w1*x[j+1] + w2*x[j+2].
inline void row_conv3(double* out, const double* x, double w0, double w1,
                      double w2, std::int64_t n) {
  for (std::int64_t j = 0; j < n; ++j)
    out[j] += w0 * x[j] + w1 * x[j + 1] + w2 * x[j + 2];
}

// k == 3 forward fast path: one fused pass per (co, ci, kh) with scalar
// guards on the padded border columns.
void conv3x3_forward(const double* x, const double* w, double* out,
                     const ConvDims& d) {
  const std::int64_t jlo = std::min<std::int64_t>(d.w_out, d.pad);
  const std::int64_t jhi =
      std::max<std::int64_t>(jlo, std::min<std::int64_t>(d.w_out, d.w + d.pad - 2));
  for (std::int64_t co = 0; co < d.c_out; ++co) {
    double* oc = out + co * d.h_out * d.w_out;
    for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
      const double* xc = x + ci * d.h * d.w;
      const double* wc = w + (co * d.c_in + ci) * 9;
      for (std::int64_t kh = 0; kh < 3; ++kh) {
        std::int64_t ho0, ho1;
        conv_ranges(d.h, d.h_out, kh, d.pad, &ho0, &ho1);
        const double w0 = wc[kh * 3], w1 = wc[kh * 3 + 1], w2 = wc[kh * 3 + 2];
        for (std::int64_t ho = ho0; ho < ho1; ++ho) {
          const double* xr = xc + (ho + kh - d.pad) * d.w;
          double* orow = oc + ho * d.w_out;
          for (std::int64_t j = 0; j < jlo; ++j) {
            double acc = orow[j];
            if (j - d.pad >= 0) acc += w0 * xr[j - d.pad];
            if (j + 1 - d.pad >= 0 && j + 1 - d.pad < d.w)
              acc += w1 * xr[j + 1 - d.pad];
            if (j + 2 - d.pad < d.w) acc += w2 * xr[j + 2 - d.pad];
            orow[j] = acc;
          }
          row_conv3(orow + jlo, xr + (jlo - d.pad), w0, w1, w2, jhi - jlo);
          for (std::int64_t j = jhi; j < d.w_out; ++j) {
            double acc = orow[j];
            if (j - d.pad < d.w) acc += w0 * xr[j - d.pad];
            if (j + 1 - d.pad < d.w) acc += w1 * xr[j + 1 - d.pad];
            if (j + 2 - d.pad < d.w) acc += w2 * xr[j + 2 - d.pad];
            orow[j] = acc;
          }
        }
      }
    }
  }
}

// k == 3 input-gradient fast path. dx[wi] += sum_kw w[kw] * go[wi - kw + pad],
// which is the row kernel above with the taps reversed.
void conv3x3_backward_input(const double* go, const double* w, double* dx,
                            const ConvDims& d) {
  const std::int64_t ilo = std::min<std::int64_t>(d.w, std::max<std::int64_t>(
                                                            0, 2 - d.pad));
  const std::int64_t ihi = std::max<std::int64_t>(
      ilo, std::min<std::int64_t>(d.w, d.w_out - d.pad));
  for (std::int64_t co = 0; co < d.c_out; ++co) {
    const double* gc = go + co * d.h_out * d.w_out;
    for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
      double* dxc = dx + ci * d.h * d.w;
      const double* wc = w + (co * d.c_in + ci) * 9;
      for (std::int64_t kh = 0; kh < 3; ++kh) {
        const double w0 = wc[kh * 3], w1 = wc[kh * 3 + 1], w2 = wc[kh * 3 + 2];
        const std::int64_t hi0 =
            std::max<std::int64_t>(0, kh - d.pad);
        const std::int64_t hi1 = std::min<std::int64_t>(
            d.h, d.h_out + kh - d.pad);
        for (std::int64_t hi = hi0; hi < hi1; ++hi) {
          const double* gr = gc + (hi - kh + d.pad) * d.w_out;
          double* dxrow = dxc + hi * d.w;
          for (std::int64_t i = 0; i < ilo; ++i) {
            double acc = dxrow[i];
            if (i + d.pad < d.w_out) acc += w0 * gr[i + d.pad];
            if (i + d.pad - 1 >= 0 && i + d.pad - 1 < d.w_out)
              acc += w1 * gr[i + d.pad - 1];
            if (i + d.pad - 2 >= 0) acc += w2 * gr[i + d.pad - 2];
            dxrow[i] = acc;
          }
          row_conv3(dxrow + ilo, gr + (ilo + d.pad - 2), w2, w1, w0,
                    ihi - ilo);
          for (std::int64_t i = ihi; i < d.w; ++i) {
            double acc = dxrow[i];
            if (i + d.pad < d.w_out) acc += w0 * gr[i + d.pad];
            if (i + d.pad - 1 < d.w_out) acc += w1 * gr[i + d.pad - 1];
            if (i + d.pad - 2 < d.w_out) acc += w2 * gr[i + d.pad - 2];
            dxrow[i] = acc;
          }
        }
      }
    }
  }
}

// k == 3 kernel-gradient fast path: three independent accumulator chains
// share each pass over a go/x row pair.
void conv3x3_backward_kernel(const double* go, const double* x, double* dw,
                             const ConvDims& d) {
  const std::int64_t jlo = std::min<std::int64_t>(d.w_out, d.pad);
  const std::int64_t jhi =
      std::max<std::int64_t>(jlo, std::min<std::int64_t>(d.w_out, d.w + d.pad - 2));
  for (std::int64_t co = 0; co < d.c_out; ++co) {
    const double* gc = go + co * d.h_out * d.w_out;
    for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
      const double* xc = x + ci * d.h * d.w;
      double* dwc = dw + (co * d.c_in + ci) * 9;
      for (std::int64_t kh = 0; kh < 3; ++kh) {
        std::int64_t ho0, ho1;
        conv_ranges(d.h, d.h_out, kh, d.pad, &ho0, &ho1);
        double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0;
        for (std::int64_t ho = ho0; ho < ho1; ++ho) {
          const double* xr = xc + (ho + kh - d.pad) * d.w;
          const double* gr = gc + ho * d.w_out;
          for (std::int64_t j = 0; j < jlo; ++j) {
            const double g = gr[j];
            if (j - d.pad >= 0) acc0 += g * xr[j - d.pad];
            if (j + 1 - d.pad >= 0 && j + 1 - d.pad < d.w)
              acc1 += g * xr[j + 1 - d.pad];
            if (j + 2 - d.pad < d.w) acc2 += g * xr[j + 2 - d.pad];
          }
          const double* xb = xr + (jlo - d.pad);
          for (std::int64_t j = 0; j < jhi - jlo; ++j) {
            const double g = gr[jlo + j];
            acc0 += g * xb[j];
            acc1 += g * xb[j + 1];
            acc2 += g * xb[j + 2];
          }
          for (std::int64_t j = jhi; j < d.w_out; ++j) {
            const double g = gr[j];
            if (j - d.pad < d.w) acc0 += g * xr[j - d.pad];
            if (j + 1 - d.pad < d.w) acc1 += g * xr[j + 1 - d.pad];
            if (j + 2 - d.pad < d.w) acc2 += g * xr[j + 2 - d.pad];
          }
        }
        dwc[kh * 3] += acc0;
        dwc[kh * 3 + 1] += acc1;
        dwc[kh * 3 + 2] += acc2;
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding) {
  check_defined(input, "conv2d");
  check_defined(kernel, "conv2d");
  check_defined(bias, "conv2d");
  const ConvDims d = conv_dims(input, kernel, bias, padding);

  std::vector<double> out(
      static_cast<std::size_t>(d.c_out * d.h_out * d.w_out));
  const double* x = input.data().data();
  const double* w = kernel.data().data();
  const double* b = bias.data().data();

  const bool fast3 = (d.k == 3 && d.pad <= 2);
  for (std::int64_t co = 0; co < d.c_out; ++co) {
    double* oc = out.data() + co * d.h_out * d.w_out;
    std::fill(oc, oc + d.h_out * d.w_out, b[co]);
  }
  if (fast3) {
    conv3x3_forward(x, w, out.data(), d);
  } else {
    for (std::int64_t co = 0; co < d.c_out; ++co) {
      double* oc = out.data() + co * d.h_out * d.w_out;
      for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
        const double* xc = x + ci * d.h * d.w;
        const double* wc = w + (co * d.c_in + ci) * d.k * d.k;
        for (std::int64_t kh = 0; kh < d.k; ++kh) {
          std::int64_t ho0, ho1;
          conv_ranges(d.h, d.h_out, kh, d.pad, &ho0, &ho1);
          for (std::int64_t kw = 0; kw < d.k; ++kw) {
            std::int64_t wo0, wo1;
            conv_ranges(d.w, d.w_out, kw, d.pad, &wo0, &wo1);
            const double wv = wc[kh * d.k + kw];
            const std::int64_t span = wo1 - wo0;
            for (std::int64_t ho = ho0; ho < ho1; ++ho) {
              const double* xrow =
                  xc + (ho + kh - d.pad) * d.w + (wo0 + kw - d.pad);
              double* orow = oc + ho * d.w_out + wo0;
              for (std::int64_t j = 0; j < span; ++j) orow[j] += wv * xrow[j];
            }
          }
        }
      }
    }
  }

  Tensor result = Tensor::from_data({d.c_out, d.h_out, d.w_out}, std::move(out));
  auto xi = input.impl(), wi = kernel.impl(), bi = bias.impl(),
       oi = result.impl();
  maybe_record({xi, wi, bi}, result, [xi, wi, bi, oi, d]() {
    const double* go = oi->grad.data();
    if (bi->requires_grad) {
      std::vector<double> db(static_cast<std::size_t>(d.c_out), 0.0);
      for (std::int64_t co = 0; co < d.c_out; ++co) {
        const double* gc = go + co * d.h_out * d.w_out;
        double acc = 0.0;
        for (std::int64_t i = 0; i < d.h_out * d.w_out; ++i) acc += gc[i];
        db[static_cast<std::size_t>(co)] = acc;
      }
      accum(bi, db);
    }
    const bool fast3 = (d.k == 3 && d.pad <= 2);
    if (wi->requires_grad) {
      std::vector<double> dw(wi->values.size(), 0.0);
      const double* x = xi->values.data();
      if (fast3) {
        conv3x3_backward_kernel(go, x, dw.data(), d);
      } else {
        for (std::int64_t co = 0; co < d.c_out; ++co) {
          const double* gc = go + co * d.h_out * d.w_out;
          for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
            const double* xc = x + ci * d.h * d.w;
            double* dwc = dw.data() + (co * d.c_in + ci) * d.k * d.k;
            for (std::int64_t kh = 0; kh < d.k; ++kh) {
              std::int64_t ho0, ho1;
              conv_ranges(d.h, d.h_out, kh, d.pad, &ho0, &ho1);
              for (std::int64_t kw = 0; kw < d.k; ++kw) {
                std::int64_t wo0, wo1;
                conv_ranges(d.w, d.w_out, kw, d.pad, &wo0, &wo1);
                const std::int64_t span = wo1 - wo0;
                double acc = 0.0;
                for (std::int64_t ho = ho0; ho < ho1; ++ho) {
                  const double* xrow =
                      xc + (ho + kh - d.pad) * d.w + (wo0 + kw - d.pad);
                  const double* grow = gc + ho * d.w_out + wo0;
                  for (std::int64_t j = 0; j < span; ++j)
                    acc += grow[j] * xrow[j];
                }
                dwc[kh * d.k + kw] = acc;
              }
            }
          }
        }
      }
      accum(wi, dw);
    }
    if (xi->requires_grad) {
      std::vector<double> dx(xi->values.size(), 0.0);
      const double* w = wi->values.data();
      if (fast3) {
        conv3x3_backward_input(go, w, dx.data(), d);
      } else {
        for (std::int64_t co = 0; co < d.c_out; ++co) {
          const double* gc = go + co * d.h_out * d.w_out;
          for (std::int64_t ci = 0; ci < d.c_in; ++ci) {
            double* dxc = dx.data() + ci * d.h * d.w;
            const double* wc = w + (co * d.c_in + ci) * d.k * d.k;
            for (std::int64_t kh = 0; kh < d.k; ++kh) {
              std::int64_t ho0, ho1;
              conv_ranges(d.h, d.h_out, kh, d.pad, &ho0, &ho1);
              for (std::int64_t kw = 0; kw < d.k; ++kw) {
                std::int64_t wo0, wo1;
                conv_ranges(d.w, d.w_out, kw, d.pad, &wo0, &wo1);
                const double wv = wc[kh * d.k + kw];
                const std::int64_t span = wo1 - wo0;
                for (std::int64_t ho = ho0; ho < ho1; ++ho) {
                  double* dxrow =
                      dxc + (ho + kh - d.pad) * d.w + (wo0 + kw - d.pad);
                  const double* grow = gc + ho * d.w_out + wo0;
                  for (std::int64_t j = 0; j < span; ++j)
                    dxrow[j] += wv * grow[j];
                }
              }
            }
          }
        }
      }
      accum(xi, dx);
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Concatenation
// ---------------------------------------------------------------------------

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw InvalidArgument("concat_channels: empty input list");
  for (const Tensor& t : xs) check_defined(t, "concat_channels");
  if (xs.size() == 1) return xs[0];
  const Tensor& first = xs[0];
  if (first.rank() != 3)
    throw InvalidArgument("concat_channels: inputs must be C x H x W");
  const std::int64_t h = first.dim(1), w = first.dim(2);
  std::int64_t c_total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != 3 || t.dim(1) != h || t.dim(2) != w)
      throw InvalidArgument("concat_channels: spatial shapes differ");
    c_total += t.dim(0);
  }
  std::vector<double> out(static_cast<std::size_t>(c_total * h * w));
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    std::memcpy(out.data() + offset, t.data().data(),
                t.data().size() * sizeof(double));
    offset += t.data().size();
  }
  Tensor result = Tensor::from_data({c_total, h, w}, std::move(out));
  std::vector<DataPtr> impls;
  impls.reserve(xs.size());
  for (const Tensor& t : xs) impls.push_back(t.impl());
  auto oi = result.impl();
  maybe_record(impls, result, [impls, oi]() {
    std::size_t offset = 0;
    for (const auto& in : impls) {
      const std::size_t n = in->values.size();
      if (in->requires_grad) {
        accum(in, std::span<const double>(oi->grad.data() + offset, n));
      }
      offset += n;
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

struct ReducePlan {
  Shape out_shape;
  std::vector<std::int64_t> out_index_of;  // per input element
  std::int64_t count = 1;                  // elements folded into each output
};

ReducePlan make_reduce_plan(const Tensor& x, std::span<const int> axes) {
  if (axes.empty()) throw InvalidArgument("reduce: empty axis list");
  const int r = x.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r) throw InvalidArgument("reduce: axis out of range");
    if (reduced[static_cast<std::size_t>(a)])
      throw InvalidArgument("reduce: duplicate axis");
    reduced[static_cast<std::size_t>(a)] = true;
  }
  ReducePlan plan;
  for (int d = 0; d < r; ++d) {
    if (reduced[static_cast<std::size_t>(d)]) {
      plan.count *= x.dim(d);
    } else {
      plan.out_shape.push_back(x.dim(d));
    }
  }
  // Row-major strides of input and of the kept dims in the output.
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int d = r - 2; d >= 0; --d)
    in_stride[static_cast<std::size_t>(d)] =
        in_stride[static_cast<std::size_t>(d + 1)] * x.dim(d + 1);
  std::vector<std::int64_t> out_stride(static_cast<std::size_t>(r), 0);
  std::int64_t s = 1;
  for (int d = r - 1; d >= 0; --d) {
    if (!reduced[static_cast<std::size_t>(d)]) {
      out_stride[static_cast<std::size_t>(d)] = s;
      s *= x.dim(d);
    }
  }
  plan.out_index_of.resize(static_cast<std::size_t>(x.numel()));
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    std::int64_t rem = i, out = 0;
    for (int d = 0; d < r; ++d) {
      const std::int64_t coord = rem / in_stride[static_cast<std::size_t>(d)];
      rem %= in_stride[static_cast<std::size_t>(d)];
      out += coord * out_stride[static_cast<std::size_t>(d)];
    }
    plan.out_index_of[static_cast<std::size_t>(i)] = out;
  }
  return plan;
}

Tensor reduce_impl(const Tensor& x, std::span<const int> axes, bool take_mean) {
  check_defined(x, "reduce");
  ReducePlan plan = make_reduce_plan(x, axes);
  const std::int64_t out_numel =
      plan.out_shape.empty() ? 1 : shape_numel(plan.out_shape);
  std::vector<double> out(static_cast<std::size_t>(out_numel), 0.0);
  const double* a = x.data().data();
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[static_cast<std::size_t>(plan.out_index_of[static_cast<std::size_t>(i)])] +=
        a[i];
  const double inv_count = 1.0 / static_cast<double>(plan.count);
  if (take_mean)
    for (double& v : out) v *= inv_count;
  Tensor result = Tensor::from_data(plan.out_shape, std::move(out));
  auto xi = x.impl(), oi = result.impl();
  const double scale_back = take_mean ? inv_count : 1.0;
  maybe_record({xi}, result,
               [xi, oi, plan = std::move(plan), scale_back]() {
                 std::vector<double> g(xi->values.size());
                 for (std::size_t i = 0; i < g.size(); ++i)
                   g[i] = oi->grad[static_cast<std::size_t>(
                              plan.out_index_of[i])] *
                          scale_back;
                 accum(xi, g);
               });
  return result;
}

std::vector<int> all_axes(const Tensor& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.rank()));
  for (int d = 0; d < x.rank(); ++d) axes[static_cast<std::size_t>(d)] = d;
  return axes;
}

}  // namespace

Tensor sum(const Tensor& x, std::span<const int> axes) {
  return reduce_impl(x, axes, /*take_mean=*/false);
}

Tensor mean(const Tensor& x, std::span<const int> axes) {
  return reduce_impl(x, axes, /*take_mean=*/true);
}

Tensor sum_all(const Tensor& x) {
  check_defined(x, "sum_all");
  if (x.rank() == 0) return add(x, 0.0);
  const std::vector<int> axes = all_axes(x);
  return sum(x, axes);
}

Tensor mean_all(const Tensor& x) {
  check_defined(x, "mean_all");
  if (x.rank() == 0) return add(x, 0.0);
  const std::vector<int> axes = all_axes(x);
  return mean(x, axes);
}

Tensor sq_norm(const Tensor& x) {
  check_defined(x, "sq_norm");
  const double* a = x.data().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data().size(); ++i) acc += a[i] * a[i];
  Tensor result = Tensor::scalar(acc);
  auto xi = x.impl(), oi = result.impl();
  maybe_record({xi}, result, [xi, oi]() {
    const double g0 = oi->grad[0];
    std::vector<double> g(xi->values.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * xi->values[i] * g0;
    accum(xi, g);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol) {
  if (!x.defined()) throw InvalidArgument("grad_check: undefined input");
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be > 0");

  Tensor probe = x.clone();
  probe.set_requires_grad(true);

  std::vector<double> analytic(static_cast<std::size_t>(probe.numel()), 0.0);
  {
    NoTapeGuard outer;  // isolate from any caller tape
    Tape tape;
    Tensor loss = f(probe);
    if (loss.numel() != 1)
      throw InvalidArgument("grad_check: f must return a scalar");
    backward(loss);
    if (probe.has_grad()) {
      auto g = probe.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
  }

  GradCheckReport report;
  report.entries_checked = probe.numel();
  {
    NoTapeGuard guard;  // pure forward evaluations
    auto values = probe.mutable_data();
    for (std::int64_t i = 0; i < probe.numel(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double f_plus = f(probe).value();
      values[i] = original - step;
      const double f_minus = f(probe).value();
      values[i] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[static_cast<std::size_t>(i)];
      const double denom =
          std::max({1.0, std::fabs(a), std::fabs(numeric)});
      const double rel = std::fabs(a - numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace bridgeta
