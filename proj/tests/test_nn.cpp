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

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bridgeta/errors.hpp"
#include "bridgeta/rng.hpp"

using namespace bridgeta;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() /
                 ("bridgeta_nn_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::vector<double> to_vec(std::span<const double> s) {
  return {s.begin(), s.end()};
}

ParamRegistry random_registry(std::uint64_t seed, int n_entries) {
  ParamRegistry reg;
  Rng rng(seed);
  for (int i = 0; i < n_entries; ++i) {
    const std::int64_t a = 1 + static_cast<std::int64_t>(rng.uniform_index(4));
    const std::int64_t b = 1 + static_cast<std::int64_t>(rng.uniform_index(5));
    std::vector<double> v(static_cast<std::size_t>(a * b));
    for (auto& x : v) x = rng.normal();
    reg.add("p" + std::to_string(i), Tensor::from_data({a, b}, std::move(v)),
            rng.bernoulli(0.25));
  }
  return reg;
}

}  // namespace

TEST_CASE("forward_layer identity and zero cases") {
  ParamRegistry reg;
  ConvLayer identity;
  identity.kernel = Tensor::from_data({1, 1, 1, 1}, {1.0});
  identity.bias = Tensor::zeros({1});
  identity.padding = 0;
  identity.activation = Activation::kNone;
  Rng rng(3);
  std::vector<double> v(9);
  for (auto& x : v) x = rng.uniform(-1, 1);
  Tensor input = Tensor::from_data({1, 3, 3}, v);
  CHECK(to_vec(identity.forward(input).data()) == v);

  ConvLayer zero;
  zero.kernel = Tensor::zeros({2, 1, 3, 3});
  zero.bias = Tensor::zeros({2});
  zero.padding = 1;
  zero.activation = Activation::kRelu;
  Tensor zeroed = zero.forward(input);
  for (double out : zeroed.data()) CHECK(out == 0.0);
}

TEST_CASE("layer gradient passes finite differences") {
  ParamRegistry reg;
  ConvLayer layer =
      make_conv_layer(reg, "layer", 2, 3, 3, 1, Activation::kRelu, 42);
  Rng rng(5);
  std::vector<double> v(2 * 6 * 6);
  for (auto& x : v) x = rng.uniform(-1, 1);
  Tensor input = Tensor::from_data({2, 6, 6}, v);
  auto wrt_kernel = [&](const Tensor& probe) {
    return sum_all(relu(conv2d(input, probe, layer.bias, 1)));
  };
  CHECK(grad_check(wrt_kernel, layer.kernel, 1e-6, 1e-5).passed);
  auto wrt_input = [&](const Tensor& probe) {
    return sum_all(layer.forward(probe));
  };
  CHECK(grad_check(wrt_input, input, 1e-6, 1e-5).passed);
}

TEST_CASE("adam fixed points and freezing") {
  ParamRegistry reg;
  reg.add("w", Tensor::from_data({2}, {1.0, -2.0}));
  reg.add("f", Tensor::from_data({2}, {3.0, 4.0}), /*frozen=*/true);
  AdamState state;

  SUBCASE("zero gradients leave parameters unchanged") {
    reg.ensure_grad_buffers();
    adam_step(reg, state, 0.1);
    CHECK(to_vec(reg.get("w").data()) == std::vector<double>{1.0, -2.0});
  }

  SUBCASE("frozen parameter ignores gradient") {
    reg.ensure_grad_buffers();
    // frozen entries never accumulate, even if a caller tries
    Tensor frozen = reg.get("f");
    std::vector<double> g{10.0, 10.0};
    frozen.accumulate_grad(g);
    CHECK_FALSE(frozen.has_grad());
    adam_step(reg, state, 0.1);
    CHECK(to_vec(reg.get("f").data()) == std::vector<double>{3.0, 4.0});
  }

  SUBCASE("missing gradient on unfrozen parameter is a contract violation") {
    CHECK_THROWS_AS(adam_step(reg, state, 0.1), ContractViolation);
  }
}

TEST_CASE("adam trajectory matches an independent recurrence") {
  // Reference recurrence computed directly from the update equations.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, lr = 0.1;
  double ref_p = 5.0, ref_m = 0.0, ref_v = 0.0;

  ParamRegistry reg;
  reg.add("w", Tensor::scalar(5.0));
  AdamState state;
  double previous = 5.0;
  for (int t = 1; t <= 100; ++t) {
    ref_m = beta1 * ref_m + (1 - beta1) * 1.0;
    ref_v = beta2 * ref_v + (1 - beta2) * 1.0;
    const double m_hat = ref_m / (1 - std::pow(beta1, t));
    const double v_hat = ref_v / (1 - std::pow(beta2, t));
    ref_p -= lr * m_hat / (std::sqrt(v_hat) + eps);

    Tensor w = reg.get("w");
    const double g = 1.0;
    w.accumulate_grad(std::span<const double>(&g, 1));
    adam_step(reg, state, lr);
    CHECK(w.value() == doctest::Approx(ref_p).epsilon(1e-12));
    CHECK(w.value() < previous);  // constant positive gradient: descending
    previous = w.value();
  }
}

TEST_CASE("cosine schedule endpoints and monotonicity") {
  CosineSchedule s{1e-4, 20, 0.0};
  CHECK(lr_at(s, 0) == 1e-4);
  CHECK(lr_at(s, 20) == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(lr_at(s, 10) == doctest::Approx(5e-5).epsilon(1e-12));

  CosineSchedule with_floor{2e-3, 10, 5e-4};
  CHECK(lr_at(with_floor, 0) == 2e-3);
  CHECK(lr_at(with_floor, 5) ==
        doctest::Approx((2e-3 + 5e-4) / 2).epsilon(1e-12));
  double prev = lr_at(with_floor, 0);
  for (int i = 1; i <= 100; ++i) {
    const double lr = lr_at(with_floor, 0.1 * i);
    CHECK(lr <= prev);
    prev = lr;
  }

  CHECK_THROWS_AS(lr_at(s, -0.1), InvalidArgument);
  CHECK_THROWS_AS(lr_at(s, 20.1), InvalidArgument);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const fs::path dir = temp_dir();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParamRegistry reg = random_registry(seed, 5);
    const fs::path path = dir / ("ckpt" + std::to_string(seed) + ".bin");
    save_checkpoint(reg, path);
    ParamRegistry loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const auto& a = reg.entries()[i];
      const auto& b = loaded.entries()[i];
      CHECK(a.name == b.name);
      CHECK(a.frozen == b.frozen);
      CHECK(a.tensor.shape() == b.tensor.shape());
      CHECK(to_vec(a.tensor.data()) == to_vec(b.tensor.data()));
    }
  }
}

TEST_CASE("checkpoint format errors name the offending field") {
  const fs::path dir = temp_dir();
  ParamRegistry reg = random_registry(7, 3);
  const fs::path path = dir / "ckpt.bin";
  save_checkpoint(reg, path);

  SUBCASE("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const fs::path cut = dir / "truncated.bin";
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(cut), FormatError);
    try {
      load_checkpoint(cut);
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }

  SUBCASE("bad magic") {
    const fs::path bad = dir / "bad_magic.bin";
    std::ofstream out(bad, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
    out.close();
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  }

  SUBCASE("version mismatch") {
    const fs::path bad = dir / "bad_version.bin";
    std::ofstream out(bad, std::ios::binary);
    out << "BTCK";
    const char version[4] = {9, 0, 0, 0};
    const char count[4] = {0, 0, 0, 0};
    out.write(version, 4);
    out.write(count, 4);
    out.close();
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  }
}

TEST_CASE("frozen checkpoint stays frozen through training steps") {
  const fs::path dir = temp_dir();
  ParamRegistry source;
  source.add("teacher.w", Tensor::from_data({3}, {1.0, 2.0, 3.0}));
  source.freeze_all();
  const fs::path path = dir / "teacher.bin";
  save_checkpoint(source, path);

  ParamRegistry reg = load_checkpoint(path);
  CHECK(reg.is_frozen("teacher.w"));
  AdamState state;
  for (int step = 0; step < 5; ++step) {
    reg.ensure_grad_buffers();
    adam_step(reg, state, 0.5);
  }
  CHECK(to_vec(reg.get("teacher.w").data()) ==
        std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("param_count") {
  ParamRegistry empty;
  CHECK(param_count(empty, true) == 0);

  ParamRegistry reg;
  reg.add("k", Tensor::zeros({2, 3}));
  reg.add("b", Tensor::zeros({2}));
  CHECK(param_count(reg, true) == 8);
  reg.set_frozen("k", true);
  CHECK(param_count(reg, false) == 2);
  CHECK(param_count(reg, true) == 8);
}

TEST_CASE("named initialization is order independent") {
  ParamRegistry a;
  ParamRegistry b;
  make_conv_layer(a, "first", 3, 4, 3, 1, Activation::kRelu, 99);
  ConvLayer a2 = make_conv_layer(a, "second", 4, 4, 3, 1, Activation::kRelu, 99);
  // build in the opposite order with the same seed
  ConvLayer b2 = make_conv_layer(b, "second", 4, 4, 3, 1, Activation::kRelu, 99);
  make_conv_layer(b, "first", 3, 4, 3, 1, Activation::kRelu, 99);
  CHECK(to_vec(a2.kernel.data()) == to_vec(b2.kernel.data()));
  // init scale bound for a ReLU layer: |w| <= sqrt(6/(C_in*k*k))
  const double s = std::sqrt(6.0 / (4 * 9));
  for (double w : a2.kernel.data()) CHECK(std::fabs(w) <= s);
  for (double bias : a2.bias.data()) CHECK(bias == 0.0);
}
