// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Geometry>
#include <cstdio>

#include "georecon/diffcore/gradcheck.hpp"
#include "georecon/gsplat/render.hpp"
#include "georecon/scenegen/render.hpp"
#include "support.hpp"

using namespace georecon;
using namespace georecon::gsplat;
using diffcore::Shape;
using georecon::testing::max_abs_diff;
using georecon::testing::random_tensor;

namespace {

geometry::CameraPose small_camera(int res = 16) {
  geometry::CameraPose pose;
  pose.K = geometry::intrinsics_from_fov(res, res, 60.0);
  pose.T = geometry::look_at(geometry::Vec3(0, -2, 0.3), geometry::Vec3::Zero());
  return pose;
}

// Random valid Gaussians inside a small box in front of the camera.
Tensor<double> random_gaussians(int n, std::mt19937_64& rng, double extent = 0.3, double smin = 0.02,
                                double smax = 0.12) {
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> g(Shape{n, kGaussianDim});
  for (int i = 0; i < n; ++i) {
    double* r = g.data() + static_cast<std::size_t>(i) * kGaussianDim;
    for (int k = 0; k < 3; ++k) {
      r[kCenter + k] = (2 * u(rng) - 1) * extent;
      r[kColor + k] = u(rng);
      r[kScale + k] = smin + (smax - smin) * u(rng);
    }
    Eigen::Quaterniond q(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    q.normalize();
    r[kRotation] = q.w();
    r[kRotation + 1] = q.x();
    r[kRotation + 2] = q.y();
    r[kRotation + 3] = q.z();
    r[kOpacity] = 0.05 + 0.9 * u(rng);
  }
  return g;
}

// Straightforward reference: Eigen matrices, full-image evaluation, no
// footprint culling.
Tensor<double> reference_render(const Tensor<double>& g, const geometry::CameraPose& pose) {
  const int w = pose.K.width, h = pose.K.height, n = g.dim(0);
  struct Item {
    double z, a;
    Eigen::Vector2d m;
    Eigen::Matrix2d inv;
    const double* row;
  };
  std::vector<Item> items;
  for (int i = 0; i < n; ++i) {
    const double* r = g.data() + static_cast<std::size_t>(i) * kGaussianDim;
    const Eigen::Vector3d mu(r[0], r[1], r[2]);
    const Eigen::Vector3d pc = pose.T.R.transpose() * (mu - pose.T.t);
    if (pc.z() <= 0.05) continue;
    const Eigen::Quaterniond q(r[kRotation], r[kRotation + 1], r[kRotation + 2], r[kRotation + 3]);
    const Eigen::Matrix3d rot = q.normalized().toRotationMatrix();
    const Eigen::Vector3d s(r[kScale], r[kScale + 1], r[kScale + 2]);
    const Eigen::Matrix3d cov = rot * s.cwiseAbs2().asDiagonal() * rot.transpose();
    Eigen::Matrix<double, 2, 3> J;
    J << pose.K.fx / pc.z(), 0, -pose.K.fx * pc.x() / (pc.z() * pc.z()), 0, pose.K.fy / pc.z(),
        -pose.K.fy * pc.y() / (pc.z() * pc.z());
    const Eigen::Matrix3d wc = pose.T.R.transpose();
    Eigen::Matrix2d cov2 = J * wc * cov * wc.transpose() * J.transpose();
    cov2 += 0.3 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d m(pose.K.fx * pc.x() / pc.z() + pose.K.cx, pose.K.fy * pc.y() / pc.z() + pose.K.cy);
    items.push_back({pc.z(), r[kOpacity], m, cov2.inverse(), r});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.z < b.z; });
  Tensor<double> out(Shape{h, w, 5});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double t = 1, c[3] = {0, 0, 0}, z = 0;
      for (const auto& it : items) {
        const Eigen::Vector2d d = Eigen::Vector2d(x, y) - it.m;
        const double wgt = it.a * std::exp(-0.5 * d.dot(it.inv * d));
        for (int k = 0; k < 3; ++k) c[k] += t * wgt * it.row[kColor + k];
        z += t * wgt * it.z;
        t *= 1 - wgt;
      }
      double* o = out.data() + (static_cast<std::size_t>(y) * w + x) * 5;
      for (int k = 0; k < 3; ++k) o[k] = c[k] + t;
      o[3] = 1 - t;
      o[4] = z / std::max(1 - t, 1e-6);
    }
  }
  return out;
}

RenderOptions exact_options() {
  RenderOptions opt;
  opt.min_weight = 1e-14;
  opt.min_transmittance = 0.0;
  return opt;
}

double camera_z(const geometry::CameraPose& pose, const double* row) {
  return pose.T.R.col(2).dot(geometry::Vec3(row[0], row[1], row[2]) - pose.T.t);
}

}  // namespace

TEST_CASE("decode activations at zero and over random weights") {
  DecodeConfig cfg;
  const double eps = cfg.voxel;
  Tensor<double> anchors(Shape{2, 3}, {0.1, -0.2, 0.05, 0.0, 0.0, 0.0});
  auto g = activate_gaussians(Var<double>::constant(Tensor<double>::zeros({2, kGaussianDim})), anchors,
                              cfg.o_max(), cfg.s_max())
               .value();
  for (int i = 0; i < 2; ++i) {
    const double* r = g.data() + i * kGaussianDim;
    for (int k = 0; k < 3; ++k) {
      CHECK(r[kCenter + k] == doctest::Approx(anchors[static_cast<std::size_t>(i * 3 + k)]).epsilon(1e-15));
      CHECK(r[kScale + k] == doctest::Approx(2 * eps));
    }
    CHECK(r[kOpacity] == 0.5);
    CHECK(r[kRotation] == 1.0);
  }

  std::mt19937_64 rng(1);
  for (double spread : {1.0, 10.0, 60.0}) {
    cfg.width = 8;
    cfg.hidden = 16;
    cfg.per_token = 3;
    ParamStore<double> store;
    GaussianHead<double> head(store, "d", cfg, rng);
    for (auto& p : store.params()) p.var.mutable_value() = random_tensor(p.var.shape(), rng, -spread, spread);
    auto tokens = Var<double>::constant(random_tensor({5, 8}, rng, -spread, spread));
    auto set = head(tokens, random_tensor({5, 3}, rng, -0.4, 0.4));
    CHECK(set.size() == 15);
    const auto& v = set.params.value();
    for (int i = 0; i < set.size(); ++i) {
      const double* r = v.data() + i * kGaussianDim;
      for (int k = 0; k < 3; ++k) {
        CHECK(r[kScale + k] <= cfg.s_max());
        CHECK(r[kScale + k] >= 0.0);
      }
      CHECK(r[kOpacity] >= 0.0);
      CHECK(r[kOpacity] <= 1.0);
    }
    // Saturated sigmoids may round to the closed ends of the ranges.
    if (spread == 1.0) CHECK_NOTHROW(set.validate());
  }
}

TEST_CASE("decode gradient through the head") {
  DecodeConfig cfg;
  cfg.width = 6;
  cfg.hidden = 8;
  cfg.per_token = 2;
  std::mt19937_64 rng(2);
  ParamStore<double> store;
  GaussianHead<double> head(store, "d", cfg, rng);
  store.get("d.out.w").mutable_value() = random_tensor(store.get("d.out.w").shape(), rng, -0.5, 0.5);
  auto tokens = Var<double>::leaf(random_tensor({3, 6}, rng));
  auto anchors = random_tensor({3, 3}, rng, -0.4, 0.4);
  std::vector<Var<double>> leaves{tokens};
  for (auto& p : store.params()) leaves.push_back(p.var);
  auto report = diffcore::grad_check_leaves("decode", [&] { return head(tokens, anchors).params; }, leaves);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("render matches the brute-force reference") {
  std::mt19937_64 rng(3);
  const auto pose = small_camera(20);
  for (int trial = 0; trial < 5; ++trial) {
    auto g = random_gaussians(12, rng);
    auto fast = render_packed(Var<double>::constant(g), pose, exact_options()).value();
    const auto ref = reference_render(g, pose);
    double err = 0;
    for (std::size_t p = 0; p < ref.size() / 5; ++p) {
      for (std::size_t c = 0; c < 4; ++c) err = std::max(err, std::abs(ref[p * 5 + c] - fast[p * 5 + c]));
      // Depth divides by alpha; nearly empty pixels amplify the footprint cutoff.
      if (ref[p * 5 + 3] > 1e-4) err = std::max(err, std::abs(ref[p * 5 + 4] - fast[p * 5 + 4]));
    }
    CHECK(err < 1e-9);
  }
}

TEST_CASE("render: empty set and single opaque splat") {
  const auto pose = small_camera(17);  // pixel (8, 8) sits on the optical axis
  auto out = render(empty_gaussians<double>(), pose);
  for (double a : out.alpha.value().vec()) CHECK(a == 0.0);
  for (double c : out.image.value().vec()) CHECK(c == 1.0);

  // A wide, nearly opaque Gaussian on the optical axis at depth z0.
  const double z0 = 1.7;
  const geometry::Vec3 c = pose.T.t + z0 * pose.T.R.col(2);
  Tensor<double> g(Shape{1, kGaussianDim}, {c.x(), c.y(), c.z(), 0.2, 0.4, 0.6, 1.0, 1.0, 1.0, 1, 0, 0, 0, 1 - 1e-7});
  auto one = render(GaussianSet<double>{Var<double>::constant(g)}, pose);
  const std::size_t px = static_cast<std::size_t>(8 * 17 + 8);
  CHECK(one.alpha.value()[px] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(one.depth.value()[px] - z0) < 1e-3);
  CHECK(one.image.value()[px * 3] == doctest::Approx(0.2).epsilon(1e-3));
}

TEST_CASE("render gradients: centers, scales, rotations, colors, opacities") {
  std::mt19937_64 rng(4);
  geometry::CameraPose pose = small_camera(8);
  auto g = random_gaussians(4, rng, 0.25, 0.1, 0.3);
  diffcore::GradCheckOptions opt;
  opt.eps = 1e-6;
  auto report = diffcore::grad_check(
      "render", [&](const std::vector<Var<double>>& in) { return render_packed(in[0], pose, exact_options()); }, {g},
      opt);
  MESSAGE("render gradcheck max rel err " << report.max_rel_err);
  CHECK(report.max_rel_err < 1e-3);

  // Through the default footprint cutoff as well, away from its boundary.
  auto report_default = diffcore::grad_check(
      "render default", [&](const std::vector<Var<double>>& in) { return render_packed(in[0], pose); }, {g}, opt);
  MESSAGE("render (default options) gradcheck max rel err " << report_default.max_rel_err);
}

TEST_CASE("render invariants over random Gaussian sets") {
  std::mt19937_64 rng(5);
  const auto pose = small_camera(12);
  std::uniform_int_distribution<int> count(1, 8);
  int failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto g = random_gaussians(count(rng), rng);
    auto extra = random_gaussians(1, rng);
    const int n = g.dim(0);
    Tensor<double> more(Shape{n + 1, kGaussianDim});
    std::copy(g.vec().begin(), g.vec().end(), more.vec().begin());
    std::copy(extra.vec().begin(), extra.vec().end(), more.vec().begin() + static_cast<long>(g.size()));
    const auto base = render_packed(Var<double>::constant(g), pose).value();
    const auto added = render_packed(Var<double>::constant(more), pose).value();
    double zmin = 1e9, zmax = -1e9;
    for (int i = 0; i < n; ++i) {
      const double z = camera_z(pose, g.data() + i * kGaussianDim);
      zmin = std::min(zmin, z);
      zmax = std::max(zmax, z);
    }
    for (std::size_t p = 0; p < base.size() / 5; ++p) {
      // Alpha never decreases when a Gaussian is added.
      if (added[p * 5 + 3] < base[p * 5 + 3] - 1e-12) ++failures;
      // Depth is a convex combination of contributing camera depths.
      if (base[p * 5 + 3] > 1e-6 && (base[p * 5 + 4] < zmin - 1e-9 || base[p * 5 + 4] > zmax + 1e-9)) ++failures;
      // Uncovered pixels show the background.
      if (base[p * 5 + 3] == 0.0 && (base[p * 5] != 1.0 || base[p * 5 + 1] != 1.0 || base[p * 5 + 2] != 1.0)) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("nearer opaque Gaussian hides the farther one") {
  const auto pose = small_camera(17);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double z_near = 1.2 + 0.5 * u(rng), z_far = z_near + 0.1 + 0.5 * u(rng);
    const geometry::Vec3 a = pose.T.t + z_near * pose.T.R.col(2), b = pose.T.t + z_far * pose.T.R.col(2);
    const double ca[3] = {u(rng), u(rng), u(rng)}, cb[3] = {u(rng), u(rng), u(rng)};
    const double op = 1 - 1e-6;
    // Listed far-first to exercise the sort.
    Tensor<double> g(Shape{2, kGaussianDim},
                     {b.x(), b.y(), b.z(), cb[0], cb[1], cb[2], 0.1, 0.1, 0.1, 1, 0, 0, 0, op,
                      a.x(), a.y(), a.z(), ca[0], ca[1], ca[2], 0.1, 0.1, 0.1, 1, 0, 0, 0, op});
    auto img = render_packed(Var<double>::constant(g), pose).value();
    const std::size_t p = static_cast<std::size_t>(8 * 17 + 8);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(img[p * 5 + static_cast<std::size_t>(c)] - ca[c]) < 1e-3);
  }
}

TEST_CASE("Gaussian export round trip") {
  std::mt19937_64 rng(7);
  auto g = random_gaussians(9, rng).cast<float>();
  const std::string path = "gsplat_export_test.bin";
  write_gaussians(path, g);
  CHECK(read_gaussians(path) == g);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_gaussians("missing_gaussians.bin"), IoError);
  CHECK_THROWS_AS(write_gaussians(path, Tensor<float>(Shape{2, 11})), ShapeError);
}
