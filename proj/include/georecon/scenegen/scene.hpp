// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "georecon/geometry/camera.hpp"

namespace georecon::scenegen {

using geometry::Vec3;

enum class PrimitiveKind { kSphere, kBox };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.1);  // sphere: radius in x (all equal); box: half extents
  Vec3 albedo = Vec3::Constant(0.5);
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  std::uint64_t seed = 0;
};

/// Deterministic random scene with n_prims spheres and axis-aligned boxes,
/// each fully inside [-0.5, 0.5]^3.
SyntheticScene generate_scene(std::uint64_t seed, int n_prims);

SyntheticScene single_sphere_scene(double radius, const Vec3& center = Vec3::Zero(),
                                   const Vec3& albedo = Vec3(0.8, 0.3, 0.2));

/// Throws ShapeError unless every primitive sits inside the unit cube.
void validate(const SyntheticScene& scene);

double signed_distance(const Primitive& prim, const Vec3& p);
double signed_distance(const SyntheticScene& scene, const Vec3& p);

/// Area-uniform samples of the union surface (points inside another
/// primitive are rejected).
std::vector<Vec3> sample_surface(const SyntheticScene& scene, std::size_t n, std::uint64_t seed);

std::string scene_to_json(const SyntheticScene& scene);
SyntheticScene scene_from_json(const std::string& text);

}  // namespace georecon::scenegen
