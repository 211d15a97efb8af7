// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>

#include "georecon/diffcore/gradcheck.hpp"
#include "georecon/encoder/encoder.hpp"
#include "georecon/scenegen/render.hpp"
#include "support.hpp"

using namespace georecon;
using namespace georecon::encoder;
using diffcore::Shape;
using georecon::testing::max_abs_diff;
using georecon::testing::random_tensor;

namespace {

geometry::CameraPose test_pose(int res) { return scenegen::orbit_cameras(1, {20.0}, 2.0, res)[0]; }

}  // namespace

TEST_CASE("encoder output shapes") {
  EncoderConfig cfg;
  cfg.width = 64;
  std::mt19937_64 rng(1);
  ParamStore<float> store;
  ImageEncoder<float> enc(store, "enc", cfg, rng);
  std::mt19937_64 data(2);
  auto image = random_tensor<float>({64, 64, 3}, data, 0, 1);
  auto rays = geometry::plucker_rays<float>(test_pose(64));
  CHECK(enc.encode_low(image, rays).shape() == Shape{16, 16, 64});
  CHECK(enc.encode_high(image).shape() == Shape{8, 8, 64});
  auto pyr = enc.encode(image, test_pose(64), 3);
  REQUIRE(pyr.levels.size() == 2);
  CHECK(pyr.levels[0].stride == 8);
  CHECK(pyr.levels[1].stride == 4);
  CHECK(pyr.view_index == 3);

  auto odd = random_tensor<float>({60, 60, 3}, data, 0, 1);
  CHECK_THROWS_AS(enc.encode_high(odd), ShapeError);
  CHECK_THROWS_AS(enc.encode_low(image, geometry::plucker_rays<float>(test_pose(32))), ShapeError);
}

TEST_CASE("low-level encoder on zero input reproduces the bias pattern") {
  EncoderConfig cfg;
  cfg.width = 16;
  cfg.use_high = false;
  std::mt19937_64 rng(5);
  ParamStore<double> store;
  ImageEncoder<double> enc(store, "enc", cfg, rng);
  auto zero_img = Tensor<double>::zeros({32, 32, 3});
  auto zero_rays = Tensor<double>::zeros({32, 32, 6});
  // Zero biases: the stack is linear-through-zero.
  auto out0 = enc.encode_low(zero_img, zero_rays).value();
  for (double v : out0.vec()) CHECK(v == 0.0);

  std::mt19937_64 brng(6);
  for (auto& p : store.params()) {
    if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".b") p.var.mutable_value() = random_tensor(p.var.shape(), brng);
  }
  auto a = enc.encode_low(zero_img, zero_rays).value();
  auto b = enc.encode_low(zero_img, zero_rays).value();
  CHECK(a == b);
  // Away from the zero-padded border every position sees the same input.
  const int c = 16;
  for (int y = 1; y < 7; ++y) {
    for (int x = 1; x < 7; ++x) {
      for (int k = 0; k < c; ++k) {
        CHECK(a[static_cast<std::size_t>((y * 8 + x) * c + k)] == a[static_cast<std::size_t>((1 * 8 + 1) * c + k)]);
      }
    }
  }
  // Oracle: the first conv emits b0 everywhere, so the second sees silu(b0)
  // inside the image and zero padding outside.
  auto b0 = store.get("enc.low0.b").value();
  auto w1 = store.get("enc.low1.w").value();
  auto b1 = store.get("enc.low1.b").value();
  const int c0 = b0.dim(0);
  for (int oy = 0; oy < 8; ++oy) {
    for (int ox = 0; ox < 8; ++ox) {
      for (int k = 0; k < c; ++k) {
        double expect = b1[static_cast<std::size_t>(k)];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
            if (iy < 0 || iy >= 16 || ix < 0 || ix >= 16) continue;
            for (int ci = 0; ci < c0; ++ci) {
              const double v = b0[static_cast<std::size_t>(ci)];
              expect += w1[static_cast<std::size_t>(((ky * 3 + kx) * c0 + ci) * c + k)] * v / (1 + std::exp(-v));
            }
          }
        }
        CHECK(a[static_cast<std::size_t>((oy * 8 + ox) * c + k)] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("low-level conv weight gradients") {
  EncoderConfig cfg;
  cfg.width = 6;
  cfg.use_high = false;
  std::mt19937_64 rng(7);
  ParamStore<double> store;
  ImageEncoder<double> enc(store, "enc", cfg, rng);
  std::mt19937_64 data(8);
  auto image = random_tensor({8, 8, 3}, data, 0, 1);
  auto rays = geometry::plucker_rays<double>(test_pose(8));
  std::vector<Var<double>> leaves;
  for (auto& p : store.params()) leaves.push_back(p.var);
  auto report = diffcore::grad_check_leaves(
      "encode_low", [&] { return enc.encode_low(image, rays); }, leaves);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("high-level backbone: statelessness and patch-embed gradient") {
  EncoderConfig cfg;
  cfg.width = 12;
  cfg.patch_high = 4;
  cfg.high_layers = 4;
  cfg.high_heads = 2;
  cfg.use_low = false;
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  ImageEncoder<double> enc(store, "enc", cfg, rng);
  std::mt19937_64 data(10);
  auto a = random_tensor({8, 8, 3}, data, 0, 1);
  auto b = random_tensor({8, 8, 3}, data, 0, 1);
  auto fa1 = enc.encode_high(a).value();
  auto fb1 = enc.encode_high(b).value();
  auto fb2 = enc.encode_high(b).value();
  auto fa2 = enc.encode_high(a).value();
  CHECK(fa1 == fa2);
  CHECK(fb1 == fb2);
  CHECK_FALSE(fa1 == fb1);

  auto report = diffcore::grad_check_leaves(
      "encode_high", [&] { return enc.encode_high(a); },
      {store.get("enc.high.patch.w"), store.get("enc.high.patch.b")});
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("ablation toggles change the pyramid") {
  std::mt19937_64 data(3);
  auto image = random_tensor<float>({32, 32, 3}, data, 0, 1);
  const auto pose = test_pose(32);
  auto levels_for = [&](bool high, bool low, bool rays) {
    EncoderConfig cfg;
    cfg.width = 12;
    cfg.high_heads = 2;
    cfg.use_high = high;
    cfg.use_low = low;
    cfg.use_rays = rays;
    std::mt19937_64 rng(1);
    ParamStore<float> store;
    ImageEncoder<float> enc(store, "e", cfg, rng);
    if (low) CHECK(store.get("e.low0.w").dim(2) == (rays ? 9 : 3));
    return enc.encode(image, pose, 0).levels.size();
  };
  CHECK(levels_for(true, true, true) == 2);
  CHECK(levels_for(true, false, true) == 1);
  CHECK(levels_for(false, true, true) == 1);
  CHECK(levels_for(false, true, false) == 1);
  EncoderConfig none;
  none.use_high = none.use_low = false;
  std::mt19937_64 rng(1);
  ParamStore<float> store;
  CHECK_THROWS_AS(ImageEncoder<float>(store, "e", none, rng), ShapeError);
}

TEST_CASE("external feature files feed the high level") {
  std::mt19937_64 data(4);
  auto feats = random_tensor<float>({3, 4, 4, 5}, data);
  const std::string path = "encoder_feat_test.bin";
  write_feature_file(path, feats);
  auto back = read_feature_file(path);
  std::remove(path.c_str());
  CHECK(back == feats);

  EncoderConfig cfg;
  cfg.width = 12;
  cfg.high_heads = 2;
  std::mt19937_64 rng(2);
  ParamStore<float> store;
  ImageEncoder<float> enc(store, "e", cfg, rng);
  enc.set_high_backbone(std::make_shared<ExternalBackbone<float>>(store, "e.external", back, 12, rng));
  auto image = random_tensor<float>({32, 32, 3}, data, 0, 1);
  auto pyr = enc.encode(image, test_pose(32), 2);
  CHECK(pyr.levels[0].map.shape() == Shape{4, 4, 12});
  CHECK(pyr.levels[0].stride == 8);
  CHECK_THROWS_AS(enc.encode(image, test_pose(32), 3), ShapeError);
  CHECK_THROWS_AS(read_feature_file("missing_features.bin"), IoError);
}
