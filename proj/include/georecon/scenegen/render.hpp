// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "georecon/diffcore/tensor.hpp"
#include "georecon/geometry/camera.hpp"
#include "georecon/scenegen/scene.hpp"

namespace georecon::scenegen {

struct ViewBundle {
  diffcore::Tensor<float> rgb;    // [H, W, 3]
  diffcore::Tensor<float> depth;  // [H, W], camera z, 0 = background
  diffcore::Tensor<float> mask;   // [H, W], 1 where a primitive was hit
  geometry::CameraPose pose;
};

inline constexpr double kAmbient = 0.3;

/// Unit vector pointing toward the fixed directional light.
Vec3 light_direction();

/// Analytic ray caster: nearest sphere/box hit, Lambertian shading with
/// ambient, white background.
ViewBundle render_reference(const SyntheticScene& scene, const geometry::CameraPose& pose);

/// Depth only, for occupancy ground truth at resolutions above the RGB one.
diffcore::Tensor<float> render_depth(const SyntheticScene& scene, const geometry::CameraPose& pose);

/// Camera-z depth of the first hit along the ray through continuous pixel
/// (u, v); 0 when the ray misses.
double ray_depth(const SyntheticScene& scene, const geometry::CameraPose& pose, double u, double v);

/// Orbit of n views around the origin. `elevations_deg` holds one value
/// (shared) or n values; azimuths are evenly spaced from `azimuth0_deg`.
std::vector<geometry::CameraPose> orbit_cameras(int n_views, const std::vector<double>& elevations_deg,
                                                double radius, int resolution, double fov_deg = 60.0,
                                                double azimuth0_deg = 0.0);

/// Two-path rig: two thirds of the views on a 5..30 degree path, the rest
/// near the horizon (-5..5 degrees). 36 views give the 24 + 12 layout.
std::vector<geometry::CameraPose> default_rig(int n_views, int resolution, double radius = 2.0);
int rig_high_path_count(int n_views);

}  // namespace georecon::scenegen
