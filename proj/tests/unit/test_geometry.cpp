// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Geometry>
#include <cstdio>
#include <random>

#include "georecon/geometry/camera.hpp"
#include "georecon/geometry/pose_io.hpp"

using namespace georecon;
using namespace georecon::geometry;

namespace {

CameraPose identity_pose(int w = 64, int h = 48) {
  CameraPose pose;
  pose.K.width = w;
  pose.K.height = h;
  pose.K.fx = 50;
  pose.K.fy = 55;
  pose.K.cx = 31.5;
  pose.K.cy = 20.0;
  return pose;
}

CameraPose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  CameraPose pose = identity_pose(40, 30);
  Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
  pose.T.R = q.normalized().toRotationMatrix();
  pose.T.t = Vec3(u(rng), u(rng), u(rng)) * 3.0;
  return pose;
}

}  // namespace

TEST_CASE("plucker rays at the principal point") {
  CameraPose pose;
  pose.K = {60, 60, 10, 10, 21, 21};
  auto r = plucker_rays<double>(pose);
  const std::size_t c = (10 * 21 + 10) * 6;
  const double expect0[6] = {0, 0, 1, 0, 0, 0};
  for (int k = 0; k < 6; ++k) CHECK(r[c + static_cast<std::size_t>(k)] == doctest::Approx(expect0[k]));

  pose.T.t = Vec3(1, 0, 0);
  auto r1 = plucker_rays<double>(pose);
  const double expect1[6] = {0, 0, 1, 0, -1, 0};
  for (int k = 0; k < 6; ++k) CHECK(r1[c + static_cast<std::size_t>(k)] == doctest::Approx(expect1[k]));
}

TEST_CASE("plucker rays reconstruct the camera line") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const CameraPose pose = random_pose(rng);
    auto r = plucker_rays<double>(pose);
    for (int y = 0; y < pose.K.height; y += 3) {
      for (int x = 0; x < pose.K.width; x += 3) {
        const double* px = r.data() + (static_cast<std::size_t>(y) * pose.K.width + x) * 6;
        const Vec3 d(px[0], px[1], px[2]);
        const Vec3 m(px[3], px[4], px[5]);
        CHECK(std::abs(d.norm() - 1.0) < 1e-5);
        CHECK(std::abs(d.dot(m)) < 1e-5);
        // Closest point to the origin on the line is d x m; o must lie on it.
        const Vec3 foot = d.cross(m);
        const Vec3 rel = pose.T.t - foot;
        CHECK((rel - rel.dot(d) * d).norm() < 1e-9);
        // The pixel's direction passes through the pixel center.
        const Projection p = project(pose.T.t + 2.0 * d, pose);
        CHECK(p.u == doctest::Approx(x).epsilon(1e-9));
        CHECK(p.v == doctest::Approx(y).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("project: principal point and behind camera") {
  const CameraPose pose = identity_pose();
  const Projection p = project(Vec3(0, 0, 1), pose);
  CHECK(p.u == pose.K.cx);
  CHECK(p.v == pose.K.cy);
  CHECK(p.z == 1.0);
  CHECK(p.visible);
  CHECK_FALSE(project(Vec3(0, 0, -1), pose).visible);
  CHECK_FALSE(project(Vec3(100, 0, 1), pose).visible);
}

TEST_CASE("unproject inverts project") {
  const CameraPose pose = identity_pose();
  const Vec3 p = unproject(pose.K.cx, pose.K.cy, 1.0, pose);
  CHECK((p - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK_THROWS_AS(unproject(1, 1, 0.0, pose), ShapeError);
  CHECK_THROWS_AS(unproject(1, 1, -2.0, pose), ShapeError);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  int tested = 0;
  while (tested < 1000) {
    const CameraPose cam = random_pose(rng);
    const Vec3 pw(u(rng) * 4 - 2, u(rng) * 4 - 2, u(rng) * 4 - 2);
    const Projection pr = project(pw, cam);
    if (!pr.visible) continue;
    const Vec3 back = unproject(pr.u, pr.v, pr.z, cam);
    CHECK((back - pw).cwiseAbs().maxCoeff() < 1e-6);
    ++tested;
  }
}

TEST_CASE("look_at builds a valid pose facing the target") {
  for (double az = 0; az < 360; az += 37) {
    const double a = az * 3.14159265358979 / 180.0;
    const Vec3 eye(2 * std::cos(a), 2 * std::sin(a), 0.7);
    CameraPose pose;
    pose.K = intrinsics_from_fov(64, 64, 60);
    pose.T = look_at(eye, Vec3::Zero());
    CHECK_NOTHROW(validate(pose));
    const Projection p = project(Vec3::Zero(), pose);
    CHECK(p.visible);
    CHECK(std::abs(p.u - pose.K.cx) < 1e-9);
    CHECK(std::abs(p.v - pose.K.cy) < 1e-9);
    // World up shows up toward the top of the image (smaller v).
    CHECK(project(Vec3(0, 0, 0.2), pose).v < p.v);
  }
  CameraPose top;
  top.K = intrinsics_from_fov(32, 32, 60);
  top.T = look_at(Vec3(0, 0, 2), Vec3::Zero());
  CHECK_NOTHROW(validate(top));
}

TEST_CASE("validate rejects bad cameras") {
  CameraPose pose = identity_pose();
  pose.K.fx = 0;
  CHECK_THROWS_AS(validate(pose), ShapeError);
  pose = identity_pose();
  pose.K.cx = 100;
  CHECK_THROWS_AS(validate(pose), ShapeError);
  pose = identity_pose();
  pose.T.R(0, 0) = -1;  // reflection
  CHECK_THROWS_AS(validate(pose), ShapeError);
}

TEST_CASE("voxelize: centers, rounding, dedup, idempotence") {
  const double eps = 1.0 / 128;
  auto one = voxelize({Vec3(0, 0, 0)}, eps);
  REQUIRE(one.size() == 1);
  CHECK(one[0].norm() == 0.0);

  auto r = voxelize({Vec3(0.004, 0, 0)}, eps);
  REQUIRE(r.size() == 1);
  CHECK(r[0].x() == 0.0078125);

  // Ties round away from zero.
  CHECK(lattice_index(Vec3(0.5 * eps, -0.5 * eps, 1.5 * eps), eps) == std::array<long, 3>{1, -1, 2});

  auto two = voxelize({Vec3(0.1, 0.2, 0.3), Vec3(0.1 + 1e-6, 0.2, 0.3)}, eps);
  CHECK(two.size() == 1);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 5000; ++i) pts.emplace_back(u(rng), u(rng), u(rng) * 0.05);
  auto centers = voxelize(pts, eps);
  CHECK(centers.size() <= pts.size());
  for (const auto& c : centers) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(c[a] / eps - std::round(c[a] / eps)) < 1e-9);
  }
  auto again = voxelize(centers, eps);
  REQUIRE(again.size() == centers.size());
  for (std::size_t i = 0; i < again.size(); ++i) CHECK((again[i] - centers[i]).norm() == 0.0);
}

TEST_CASE("feature map coordinates keep centers aligned") {
  // Pixels 0..3 of a stride-4 map average to feature texel 0.
  CHECK(to_feature_coord(1.5, 4) == 0.0);
  CHECK(to_feature_coord(5.5, 4) == 1.0);
  CHECK(to_feature_coord(3.5, 8) == 0.0);
  CHECK(to_feature_coord(7.0, 1) == 7.0);
}

TEST_CASE("pose file round trip") {
  std::mt19937_64 rng(30);
  std::vector<CameraPose> poses;
  for (int i = 0; i < 5; ++i) poses.push_back(random_pose(rng));
  const std::string path = "geometry_poses_test.jsonl";
  write_poses(path, poses);
  auto back = read_poses(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(back[i].K.fx == poses[i].K.fx);
    CHECK(back[i].K.width == poses[i].K.width);
    CHECK((back[i].T.R - poses[i].T.R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back[i].T.t - poses[i].T.t).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(pose_from_json_line("{\"fx\": 1}"), IoError);
  CHECK_THROWS_AS(read_poses("/nonexistent/poses.jsonl"), IoError);
}
