// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "georecon/diffcore/gradcheck.hpp"
#include "georecon/diffcore/ops.hpp"
#include "support.hpp"

using namespace georecon;
using namespace georecon::diffcore;
using georecon::testing::random_tensor;

namespace {

using InputFactory = std::function<std::vector<Tensor<double>>(std::mt19937_64&)>;

// Runs grad_check over `seeds` independent draws and returns the worst error.
double worst_over_seeds(const std::string& name, int seeds, const InputFactory& make, const GradFn& fn,
                        GradCheckOptions opt = {}) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s) * 7919 + 17);
    opt.seed = static_cast<std::uint64_t>(s);
    const auto report = grad_check(name, fn, make(rng), opt);
    REQUIRE(report.checked > 0);
    worst = std::max(worst, report.max_rel_err);
  }
  return worst;
}

}  // namespace

TEST_CASE("linear forward: identity and zero input") {
  auto x = Var<double>::constant(Tensor<double>({1, 2}, {1, 2}));
  auto w = Var<double>::constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto b0 = Var<double>::constant(Tensor<double>::zeros({2}));
  auto y = linear(x, w, b0);
  CHECK(y.value()[0] == 1.0);
  CHECK(y.value()[1] == 2.0);

  auto zero = Var<double>::constant(Tensor<double>::zeros({1, 2}));
  auto wr = Var<double>::constant(Tensor<double>({2, 2}, {0.3, -2, 5, 7}));
  auto b = Var<double>::constant(Tensor<double>({2}, {3, 4}));
  auto y2 = linear(zero, wr, b);
  CHECK(y2.value()[0] == 3.0);
  CHECK(y2.value()[1] == 4.0);

  auto bad = Var<double>::constant(Tensor<double>::zeros({1, 3}));
  CHECK_THROWS_AS(linear(bad, wr, b), ShapeError);
}

TEST_CASE("linear gradient matches central differences") {
  const double err = worst_over_seeds(
      "linear", 100,
      [](std::mt19937_64& rng) {
        return std::vector{random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)};
      },
      [](const std::vector<Var<double>>& in) { return linear(in[0], in[1], in[2]); });
  CHECK(err < 1e-6);
}

TEST_CASE("activations at zero and softmax identities") {
  auto z = Var<double>::constant(Tensor<double>::zeros({1}));
  CHECK(silu(z).value()[0] == 0.0);
  CHECK(sigmoid(z).value()[0] == 0.5);

  auto c = Var<double>::constant(Tensor<double>::full({5}, 2.5));
  auto s = softmax(c);
  for (std::size_t i = 0; i < 5; ++i) CHECK(s.value()[i] == doctest::Approx(0.2).epsilon(1e-15));

  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 6}, rng, -3, 3);
  auto shifted = x;
  for (auto& v : shifted.vec()) v += 11.0;
  auto a = softmax(Var<double>::constant(x), 1).value();
  auto b = softmax(Var<double>::constant(shifted), 1).value();
  CHECK(georecon::testing::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("softmax rows sum to one and stay nonnegative") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({3, 7, 4}, rng, -20, 20);
    for (int axis = 0; axis < 3; ++axis) {
      auto y = softmax(Var<double>::constant(x), axis).value();
      const Shape& sh = y.shape();
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(sh[static_cast<std::size_t>(i)]);
      for (int i = axis + 1; i < 3; ++i) inner *= static_cast<std::size_t>(sh[static_cast<std::size_t>(i)]);
      const auto len = static_cast<std::size_t>(sh[static_cast<std::size_t>(axis)]);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          double total = 0;
          for (std::size_t l = 0; l < len; ++l) {
            const double v = y[o * len * inner + l * inner + in];
            CHECK(v >= 0.0);
            total += v;
          }
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("rmsnorm of a constant vector is its sign") {
  for (double c : {-3.0, -0.25, 0.5, 4.0}) {
    auto x = Var<double>::constant(Tensor<double>::full({2, 8}, c));
    auto g = Var<double>::constant(Tensor<double>::full({8}, 1.0));
    auto y = rmsnorm(x, g).value();
    // rms includes eps, so the result is sign(c) up to O(eps / c^2).
    for (double v : y.vec()) CHECK(v == doctest::Approx(c > 0 ? 1.0 : -1.0).epsilon(1e-5));
  }
}

TEST_CASE("elementwise and normalization gradients") {
  auto make1 = [](std::mt19937_64& rng) { return std::vector{random_tensor({4, 6}, rng, -3, 3)}; };
  CHECK(worst_over_seeds("silu", 100, make1, [](auto& in) { return silu(in[0]); }) < 1e-6);
  CHECK(worst_over_seeds("sigmoid", 100, make1, [](auto& in) { return sigmoid(in[0]); }) < 1e-6);
  CHECK(worst_over_seeds("softmax_last", 100, make1, [](auto& in) { return softmax(in[0], 1); }) < 1e-6);
  CHECK(worst_over_seeds("softmax_first", 100, make1, [](auto& in) { return softmax(in[0], 0); }) < 1e-6);
  CHECK(worst_over_seeds(
            "rmsnorm", 100,
            [](std::mt19937_64& rng) { return std::vector{random_tensor({4, 6}, rng, -2, 2), random_tensor({6}, rng)}; },
            [](auto& in) { return rmsnorm(in[0], in[1]); }) < 1e-6);
  CHECK(worst_over_seeds(
            "masked_softmax", 100,
            [](std::mt19937_64& rng) { return std::vector{random_tensor({5, 4}, rng, -3, 3)}; },
            [](auto& in) {
              Tensor<double> mask({5, 4}, {1, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 1, 1, 0});
              return masked_softmax(in[0], mask);
            }) < 1e-6);
}

TEST_CASE("sigmoid chain of depth three") {
  const double err = worst_over_seeds(
      "sigmoid_chain", 100, [](std::mt19937_64& rng) { return std::vector{random_tensor({8}, rng, -4, 4)}; },
      [](auto& in) { return sigmoid(sigmoid(sigmoid(in[0]))); });
  CHECK(err < 1e-6);
}

TEST_CASE("structural ops gradients") {
  CHECK(worst_over_seeds(
            "concat_slice", 100,
            [](std::mt19937_64& rng) { return std::vector{random_tensor({3, 2}, rng), random_tensor({3, 5}, rng)}; },
            [](auto& in) {
              auto c = concat<double>({in[0], in[1]}, 1);
              return mul(slice(c, 1, 1, 4), slice(c, 1, 3, 4));
            }) < 1e-6);
  CHECK(worst_over_seeds(
            "weighted_sum", 100,
            [](std::mt19937_64& rng) {
              return std::vector{random_tensor({4, 3}, rng), random_tensor({4, 5}, rng), random_tensor({4, 5}, rng),
                                 random_tensor({4, 5}, rng)};
            },
            [](auto& in) { return weighted_sum(in[0], {in[1], in[2], in[3]}); }) < 1e-6);
  CHECK(worst_over_seeds(
            "mse", 100,
            [](std::mt19937_64& rng) { return std::vector{random_tensor({6}, rng), random_tensor({6}, rng)}; },
            [](auto& in) { return mse(in[0], in[1]); }) < 1e-6);
  CHECK(worst_over_seeds(
            "broadcast_rows", 100, [](std::mt19937_64& rng) { return std::vector{random_tensor({5}, rng)}; },
            [](auto& in) { return silu(broadcast_rows(in[0], 3)); }) < 1e-6);
}

TEST_CASE("conv2d gradient") {
  const double err = worst_over_seeds(
      "conv2d", 100,
      [](std::mt19937_64& rng) {
        return std::vector{random_tensor({7, 6, 3}, rng), random_tensor({3, 3, 3, 4}, rng), random_tensor({4}, rng)};
      },
      [](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); });
  CHECK(err < 1e-6);
}

TEST_CASE("attention gradient and single-key case") {
  const double err = worst_over_seeds(
      "attention", 100,
      [](std::mt19937_64& rng) {
        return std::vector{random_tensor({5, 8}, rng), random_tensor({6, 8}, rng), random_tensor({6, 8}, rng)};
      },
      [](auto& in) { return attention(in[0], in[1], in[2], 2); });
  CHECK(err < 1e-6);

  std::mt19937_64 rng(5);
  auto q = Var<double>::constant(random_tensor({3, 4}, rng));
  auto k = Var<double>::constant(random_tensor({1, 4}, rng));
  auto v = Var<double>::constant(random_tensor({1, 4}, rng));
  auto o = attention(q, k, v, 2).value();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(o[static_cast<std::size_t>(r * 4 + c)] == doctest::Approx(v.value()[static_cast<std::size_t>(c)]));
  }
}

TEST_CASE("attention gradient across query blocks") {
  std::mt19937_64 rng(13);
  GradCheckOptions opt;
  opt.max_entries_per_input = 60;
  auto report = grad_check("attention_blocks", [](auto& in) { return attention(in[0], in[1], in[2], 2); },
                           {random_tensor({300, 4}, rng), random_tensor({20, 4}, rng), random_tensor({20, 4}, rng)}, opt);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("attention without recording matches the recorded path") {
  std::mt19937_64 rng(9);
  auto q = random_tensor({600, 12}, rng);
  auto k = random_tensor({600, 12}, rng);
  auto v = random_tensor({600, 12}, rng);
  auto recorded = attention(Var<double>::leaf(q), Var<double>::leaf(k), Var<double>::leaf(v), 3).value();
  Tensor<double> plain;
  {
    NoGradGuard guard;
    plain = attention(Var<double>::constant(q), Var<double>::constant(k), Var<double>::constant(v), 3).value();
  }
  CHECK(georecon::testing::max_abs_diff(recorded, plain) < 1e-12);
}

TEST_CASE("rope3d: identity at origin, isometry, gradient") {
  std::mt19937_64 rng(21);
  auto x = random_tensor({10, 24}, rng);
  auto zero = Tensor<double>::zeros({10, 3});
  auto y0 = rope3d(Var<double>::constant(x), zero, 12).value();
  CHECK(georecon::testing::max_abs_diff(x, y0) < 1e-15);

  auto coords = random_tensor({10, 3}, rng, -0.5, 0.5);
  auto y = rope3d(Var<double>::constant(x), coords, 12).value();
  for (int r = 0; r < 10; ++r) {
    double nx = 0, ny = 0;
    for (int c = 0; c < 24; ++c) {
      nx += x[static_cast<std::size_t>(r * 24 + c)] * x[static_cast<std::size_t>(r * 24 + c)];
      ny += y[static_cast<std::size_t>(r * 24 + c)] * y[static_cast<std::size_t>(r * 24 + c)];
    }
    CHECK(std::abs(std::sqrt(nx) - std::sqrt(ny)) < 1e-6);
  }
  CHECK_THROWS_AS(rope3d(Var<double>::constant(random_tensor({2, 8}, rng)), Tensor<double>::zeros({2, 3}), 8),
                  ShapeError);

  const double err = worst_over_seeds(
      "rope3d", 100,
      [](std::mt19937_64& r) { return std::vector{random_tensor({4, 12}, r), random_tensor({4, 3}, r, -0.5, 0.5)}; },
      [](auto& in) { return rope3d(in[0], in[1].value(), 6); }, [] {
        GradCheckOptions o;
        o.differentiable = {true, false};
        return o;
      }());
  CHECK(err < 1e-6);
}

TEST_CASE("bilinear_sample: exact at texels, mean at midpoints, linear between") {
  std::mt19937_64 rng(1);
  auto f = random_tensor({5, 6, 3}, rng);
  auto F = Var<double>::constant(f);
  auto at = [&](double x, double y) {
    return bilinear_sample(F, Var<double>::constant(Tensor<double>({1, 2}, {x, y}))).value();
  };
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 6; ++c) {
      auto v = at(c, r);
      for (int k = 0; k < 3; ++k) CHECK(v[static_cast<std::size_t>(k)] == f[static_cast<std::size_t>((r * 6 + c) * 3 + k)]);
    }
  }
  auto mid = at(2.5, 1.5);
  for (int k = 0; k < 3; ++k) {
    auto px = [&](int r, int c) { return f[static_cast<std::size_t>((r * 6 + c) * 3 + k)]; };
    CHECK(mid[static_cast<std::size_t>(k)] == doctest::Approx((px(1, 2) + px(1, 3) + px(2, 2) + px(2, 3)) / 4).epsilon(1e-14));
  }
  auto a = at(1.0, 2.0), b = at(2.0, 2.0), m = at(1.3, 2.0);
  for (int k = 0; k < 3; ++k) {
    const auto i = static_cast<std::size_t>(k);
    CHECK(m[i] == doctest::Approx(0.7 * a[i] + 0.3 * b[i]).epsilon(1e-14));
  }
  // Border clamp.
  auto out = at(-3.0, 100.0);
  for (int k = 0; k < 3; ++k) CHECK(out[static_cast<std::size_t>(k)] == f[static_cast<std::size_t>((4 * 6 + 0) * 3 + k)]);
}

TEST_CASE("bilinear_sample gradients for features and coordinates") {
  GradCheckOptions opt;
  opt.skip = skip_integer_coordinates(1, 2e-4);
  const double err = worst_over_seeds(
      "bilinear_sample", 100,
      [](std::mt19937_64& rng) { return std::vector{random_tensor({5, 6, 3}, rng), random_tensor({7, 2}, rng, 0.1, 3.9)}; },
      [](auto& in) { return bilinear_sample(in[0], in[1]); }, opt);
  CHECK(err < 1e-5);

  // Coordinate-only check.
  GradCheckOptions coord_only = opt;
  coord_only.differentiable = {false, true};
  const double cerr = worst_over_seeds(
      "bilinear_coords", 100,
      [](std::mt19937_64& rng) { return std::vector{random_tensor({5, 6, 3}, rng), random_tensor({7, 2}, rng, 0.1, 3.9)}; },
      [](auto& in) { return bilinear_sample(in[0], in[1]); }, coord_only);
  CHECK(cerr < 1e-5);
}

TEST_CASE("grad_check flags integer sample points as skipped") {
  std::mt19937_64 rng(2);
  GradCheckOptions opt;
  opt.skip = skip_integer_coordinates(1, 1e-9);
  auto report = grad_check("bilinear_sample", [](auto& in) { return bilinear_sample(in[0], in[1]); },
                           {random_tensor({4, 4, 2}, rng), Tensor<double>({1, 2}, {2.0, 1.0})}, opt);
  CHECK(report.skipped == 2);
  CHECK_FALSE(report.notes.empty());
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check reports non-finite values") {
  auto fn = [](const std::vector<Var<double>>& in) {
    Tensor<double> t = in[0].value();
    for (auto& v : t.vec()) v = std::log(v);
    return make_result<double>("log", std::move(t), {in[0]}, [](Node<double>&) {});
  };
  CHECK_THROWS_AS(grad_check("log", fn, {Tensor<double>({1}, {-1.0})}), NumericError);
}

TEST_CASE("autograd accumulates through shared subexpressions") {
  auto x = Var<double>::leaf(Tensor<double>({3}, {1, -2, 0.5}));
  auto y = sum(mul(x, x));
  backward(y);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == -4.0);
  CHECK(x.grad()[2] == 1.0);

  NoGradGuard guard;
  auto z = mul(x, x);
  CHECK_FALSE(z.requires_grad());
}

TEST_CASE("parameter registry rejects duplicate names") {
  ParamStore<float> store;
  store.add("w", Tensor<float>::zeros({2, 2}));
  CHECK_THROWS(store.add("w", Tensor<float>::zeros({1})));
  CHECK(store.total_elements() == 4);
  ParamStore<double> twin;
  twin.add("w", Tensor<double>::full({2, 2}, 1.0));
  store.load_from(twin);
  CHECK(store.get("w").value()[3] == 1.0f);
}
