// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "georecon/scenegen/bundle_io.hpp"
#include "georecon/scenegen/render.hpp"

using namespace georecon;
using namespace georecon::scenegen;
using geometry::CameraPose;

TEST_CASE("generate_scene is deterministic and stays in the cube") {
  const auto a = generate_scene(42, 8);
  const auto b = generate_scene(42, 8);
  REQUIRE(a.primitives.size() == 8);
  CHECK(scene_to_json(a) == scene_to_json(b));
  CHECK(scene_to_json(a) != scene_to_json(generate_scene(43, 8)));
  for (std::uint64_t s = 0; s < 50; ++s) CHECK_NOTHROW(validate(generate_scene(s, 8)));
  CHECK_THROWS_AS(generate_scene(1, 0), ShapeError);

  const auto sphere = single_sphere_scene(0.3);
  REQUIRE(sphere.primitives.size() == 1);
  CHECK(sphere.primitives[0].kind == PrimitiveKind::kSphere);
  CHECK_THROWS_AS(single_sphere_scene(0.3, Vec3(0.4, 0, 0)), ShapeError);
}

TEST_CASE("surface voxelization occupies a small fraction of the 128^3 grid") {
  const double eps = 1.0 / 128;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto scene = generate_scene(seed, 8);
    const auto pts = sample_surface(scene, 400000, seed);
    for (std::size_t i = 0; i < pts.size(); i += 97) CHECK(std::abs(signed_distance(scene, pts[i])) < 1e-9);
    const auto centers = geometry::voxelize(pts, eps);
    const double frac = static_cast<double>(centers.size()) / (128.0 * 128.0 * 128.0);
    CHECK(frac >= 0.005);
    CHECK(frac <= 0.20);
  }
}

TEST_CASE("orbit cameras") {
  const auto poses = orbit_cameras(4, {0.0}, 2.0, 32);
  REQUIRE(poses.size() == 4);
  const Vec3 expected[4] = {{2, 0, 0}, {0, 2, 0}, {-2, 0, 0}, {0, -2, 0}};
  for (int i = 0; i < 4; ++i) {
    CHECK((poses[static_cast<std::size_t>(i)].T.t - expected[i]).norm() < 1e-12);
    CHECK(poses[static_cast<std::size_t>(i)].T.t.norm() == doctest::Approx(2.0));
  }
  CHECK_THROWS_AS(orbit_cameras(4, {0.0}, 1.0, 32), ShapeError);

  const auto rig = default_rig(36, 64);
  REQUIRE(rig.size() == 36);
  CHECK(rig_high_path_count(36) == 24);
  for (std::size_t i = 0; i < rig.size(); ++i) {
    const auto& pose = rig[i];
    const double el = std::asin(pose.T.t.z() / pose.T.t.norm()) * 180.0 / 3.14159265358979;
    if (i < 24) {
      CHECK(el >= 5.0 - 1e-9);
      CHECK(el <= 30.0 + 1e-9);
    } else {
      CHECK(el >= -5.0 - 1e-9);
      CHECK(el <= 5.0 + 1e-9);
    }
    const auto p = geometry::project(Vec3::Zero(), pose);
    CHECK(p.visible);
    CHECK(std::abs(p.u - pose.K.cx) < 1e-6);
    CHECK(std::abs(p.v - pose.K.cy) < 1e-6);
    // All cube corners are in view.
    for (int c = 0; c < 8; ++c) {
      const Vec3 corner((c & 1) ? 0.5 : -0.5, (c & 2) ? 0.5 : -0.5, (c & 4) ? 0.5 : -0.5);
      CHECK(geometry::project(corner, pose).visible);
    }
  }
  // Adjacent high-path views are 15 degrees apart in azimuth, low-path 30.
  auto az = [](const CameraPose& p) { return std::atan2(p.T.t.y(), p.T.t.x()) * 180.0 / 3.14159265358979; };
  CHECK(std::remainder(az(rig[1]) - az(rig[0]), 360.0) == doctest::Approx(15.0));
  CHECK(std::remainder(az(rig[25]) - az(rig[24]), 360.0) == doctest::Approx(30.0));
}

TEST_CASE("reference render: miss pixels and analytic sphere depth") {
  const auto scene = single_sphere_scene(0.3);
  CameraPose pose;
  pose.K = geometry::intrinsics_from_fov(65, 65, 60);
  pose.T = geometry::look_at(Vec3(0, 0, 2), Vec3::Zero());
  const auto view = render_reference(scene, pose);
  const std::size_t center = 32 * 65 + 32;
  CHECK(std::abs(view.depth[center] - 1.7) < 1e-4);
  CHECK(view.mask[center] == 1.0f);
  // Corner pixel misses.
  CHECK(view.depth[0] == 0.0f);
  CHECK(view.mask[0] == 0.0f);
  for (int c = 0; c < 3; ++c) CHECK(view.rgb[static_cast<std::size_t>(c)] == 1.0f);
}

TEST_CASE("reference render: consistency invariants on random scenes") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto scene = generate_scene(seed + 100, 8);
    const auto rig = default_rig(6, 48);
    std::vector<ViewBundle> views;
    for (const auto& pose : rig) views.push_back(render_reference(scene, pose));
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
      const auto& v = views[vi];
      const int w = v.pose.K.width;
      for (std::size_t i = 0; i < v.depth.size(); ++i) {
        const bool bg = v.mask[i] == 0.0f;
        CHECK(bg == (v.depth[i] == 0.0f));
        if (bg) {
          CHECK(v.rgb[3 * i] == 1.0f);
          continue;
        }
        for (int c = 0; c < 3; ++c) {
          CHECK(v.rgb[3 * i + static_cast<std::size_t>(c)] >= 0.0f);
          CHECK(v.rgb[3 * i + static_cast<std::size_t>(c)] <= 1.0f);
        }
        const double u = static_cast<double>(i % static_cast<std::size_t>(w));
        const double vv = static_cast<double>(i / static_cast<std::size_t>(w));
        const Vec3 p = geometry::unproject(u, vv, v.depth[i], v.pose);
        CHECK(std::abs(signed_distance(scene, p)) < 1e-3);
        // Cross-view agreement: visible in the other view or occluded there.
        const auto& other = views[(vi + 1) % views.size()].pose;
        const auto pr = geometry::project(p, other);
        if (!pr.visible) continue;
        const double d = ray_depth(scene, other, pr.u, pr.v);
        CHECK(d > 0.0);
        CHECK((std::abs(d - pr.z) < 1e-3 || d < pr.z - 1e-3));
      }
    }
  }
}

TEST_CASE("scene directory round trip") {
  const auto scene = generate_scene(7, 3);
  std::vector<ViewBundle> views;
  for (const auto& pose : default_rig(3, 24)) views.push_back(render_reference(scene, pose));
  const std::string dir = "scenegen_roundtrip_dir";
  write_scene_dir(dir, views, &scene);
  const auto back = read_scene_dir(dir);
  std::filesystem::remove_all(dir);
  REQUIRE(back.views.size() == 3);
  REQUIRE(back.scene.has_value());
  CHECK(scene_to_json(*back.scene) == scene_to_json(scene));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.views[i].depth == views[i].depth);
    CHECK(back.views[i].mask == views[i].mask);
    for (std::size_t k = 0; k < views[i].rgb.size(); ++k) {
      CHECK(std::abs(back.views[i].rgb[k] - views[i].rgb[k]) <= 0.5f / 255.0f + 1e-6f);
    }
  }
  CHECK_THROWS_AS(read_scene_dir("does_not_exist_dir"), IoError);
}
