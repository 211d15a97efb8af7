// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/scenegen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "georecon/errors.hpp"

namespace georecon::scenegen {

namespace {

Vec3 half_extent(const Primitive& p) {
  return p.kind == PrimitiveKind::kSphere ? Vec3::Constant(p.size.x()) : p.size;
}

bool inside_cube(const Primitive& p) {
  const Vec3 h = half_extent(p);
  for (int a = 0; a < 3; ++a) {
    if (p.center[a] - h[a] < -0.5 || p.center[a] + h[a] > 0.5) return false;
  }
  return true;
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, int n_prims) {
  if (n_prims < 1) throw ShapeError("generate_scene: need at least one primitive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticScene scene;
  scene.seed = seed;
  while (static_cast<int>(scene.primitives.size()) < n_prims) {
    Primitive p;
    p.kind = unit(rng) < 0.5 ? PrimitiveKind::kSphere : PrimitiveKind::kBox;
    if (p.kind == PrimitiveKind::kSphere) {
      p.size = Vec3::Constant(0.08 + 0.14 * unit(rng));
    } else {
      p.size = Vec3(0.06 + 0.14 * unit(rng), 0.06 + 0.14 * unit(rng), 0.06 + 0.14 * unit(rng));
    }
    p.center = Vec3(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5) * 0.8;
    p.albedo = Vec3(0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng));
    if (inside_cube(p)) scene.primitives.push_back(p);
  }
  return scene;
}

SyntheticScene single_sphere_scene(double radius, const Vec3& center, const Vec3& albedo) {
  SyntheticScene scene;
  Primitive p;
  p.kind = PrimitiveKind::kSphere;
  p.center = center;
  p.size = Vec3::Constant(radius);
  p.albedo = albedo;
  scene.primitives.push_back(p);
  validate(scene);
  return scene;
}

void validate(const SyntheticScene& scene) {
  if (scene.primitives.empty()) throw ShapeError("scene has no primitives");
  for (const auto& p : scene.primitives) {
    if (!inside_cube(p)) throw ShapeError("primitive extends outside [-0.5, 0.5]^3");
    if ((p.size.array() <= 0).any()) throw ShapeError("primitive size must be positive");
  }
}

double signed_distance(const Primitive& prim, const Vec3& p) {
  const Vec3 d = p - prim.center;
  if (prim.kind == PrimitiveKind::kSphere) return d.norm() - prim.size.x();
  const Vec3 q = d.cwiseAbs() - prim.size;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double signed_distance(const SyntheticScene& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) best = std::min(best, signed_distance(prim, p));
  return best;
}

std::vector<Vec3> sample_surface(const SyntheticScene& scene, std::size_t n, std::uint64_t seed) {
  validate(scene);
  std::vector<double> area;
  for (const auto& p : scene.primitives) {
    if (p.kind == PrimitiveKind::kSphere) {
      area.push_back(4.0 * std::numbers::pi * p.size.x() * p.size.x());
    } else {
      const Vec3& h = p.size;
      area.push_back(8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z()));
    }
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(area.begin(), area.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 200 * n + 1000) throw NumericError("sample_surface: scene surface is fully enclosed");
    const std::size_t k = pick(rng);
    const Primitive& prim = scene.primitives[k];
    Vec3 p;
    if (prim.kind == PrimitiveKind::kSphere) {
      Vec3 d(normal(rng), normal(rng), normal(rng));
      p = prim.center + prim.size.x() * d.normalized();
    } else {
      const Vec3& h = prim.size;
      const double faces[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
      std::discrete_distribution<int> face(faces, faces + 3);
      const int axis = face(rng);
      Vec3 local(unit(rng) * h.x(), unit(rng) * h.y(), unit(rng) * h.z());
      local[axis] = (unit(rng) < 0 ? -1.0 : 1.0) * h[axis];
      p = prim.center + local;
    }
    bool covered = false;
    for (std::size_t j = 0; j < scene.primitives.size() && !covered; ++j) {
      if (j != k && signed_distance(scene.primitives[j], p) < -1e-9) covered = true;
    }
    if (!covered) out.push_back(p);
  }
  return out;
}

std::string scene_to_json(const SyntheticScene& scene) {
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["primitives"] = nlohmann::json::array();
  for (const auto& p : scene.primitives) {
    j["primitives"].push_back({{"kind", p.kind == PrimitiveKind::kSphere ? "sphere" : "box"},
                               {"center", {p.center.x(), p.center.y(), p.center.z()}},
                               {"size", {p.size.x(), p.size.y(), p.size.z()}},
                               {"albedo", {p.albedo.x(), p.albedo.y(), p.albedo.z()}}});
  }
  return j.dump(2);
}

SyntheticScene scene_from_json(const std::string& text) {
  SyntheticScene scene;
  try {
    const auto j = nlohmann::json::parse(text);
    scene.seed = j.at("seed").get<std::uint64_t>();
    auto vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      if (v.size() != 3) throw IoError("scene: expected 3-vector");
      return Vec3(v[0], v[1], v[2]);
    };
    for (const auto& jp : j.at("primitives")) {
      Primitive p;
      const auto kind = jp.at("kind").get<std::string>();
      if (kind == "sphere") {
        p.kind = PrimitiveKind::kSphere;
      } else if (kind == "box") {
        p.kind = PrimitiveKind::kBox;
      } else {
        throw IoError("scene: unknown primitive kind " + kind);
      }
      p.center = vec(jp.at("center"));
      p.size = vec(jp.at("size"));
      p.albedo = vec(jp.at("albedo"));
      scene.primitives.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed scene description: ") + e.what());
  }
  validate(scene);
  return scene;
}

}  // namespace georecon::scenegen
