// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "georecon/diffcore/tensor.hpp"

namespace georecon::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
};

// Camera-to-world rotation and the camera origin in world coordinates.
// Camera frame: x right, y down, z forward.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

struct CameraPose {
  Intrinsics K;
  Extrinsics T;
};

void validate(const Intrinsics& K);
void validate(const Extrinsics& T);
void validate(const CameraPose& pose);

/// Intrinsics for a square-pixel pinhole with the given horizontal field of
/// view and the principal point at the image center.
Intrinsics intrinsics_from_fov(int width, int height, double fov_deg);

/// Pose at `eye` looking at `target`; `up` fixes the roll (image y points
/// away from it).
Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1));

inline constexpr double kZNear = 1e-4;

struct Projection {
  double u = 0, v = 0;  // pixel coordinates, integer at texel centers
  double z = 0;         // camera-frame depth
  bool visible = false;
};

Vec3 world_to_camera(const Vec3& p_world, const Extrinsics& T);
Projection project(const Vec3& p_world, const CameraPose& pose);

/// Inverse of project for camera-z depth d > 0.
Vec3 unproject(double u, double v, double depth, const CameraPose& pose);

/// Unit world-frame direction of the ray through pixel (u, v).
Vec3 ray_direction(double u, double v, const CameraPose& pose);

/// Per-pixel Plücker coordinates (d, o x d), [H, W, 6].
template <typename T>
diffcore::Tensor<T> plucker_rays(const CameraPose& pose);

/// Maps an image-pixel coordinate onto a feature map downsampled by `stride`
/// (each feature texel covers `stride` pixels; centers stay aligned).
inline double to_feature_coord(double pixel, int stride) {
  return (pixel - 0.5 * (stride - 1)) / static_cast<double>(stride);
}

/// Snaps points to the lattice k * eps (round half away from zero) and
/// removes duplicates. Output is sorted lexicographically by lattice index.
std::vector<Vec3> voxelize(const std::vector<Vec3>& points, double eps);

/// Lattice index of a point, round half away from zero per axis.
std::array<long, 3> lattice_index(const Vec3& p, double eps);

}  // namespace georecon::geometry
