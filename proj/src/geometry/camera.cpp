// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/geometry/camera.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "georecon/errors.hpp"

namespace georecon::geometry {

void validate(const Intrinsics& K) {
  if (!(K.fx > 0 && K.fy > 0)) throw ShapeError("intrinsics: focal lengths must be positive");
  if (K.width <= 0 || K.height <= 0) throw ShapeError("intrinsics: image size must be positive");
  if (!(K.cx >= 0 && K.cx < K.width && K.cy >= 0 && K.cy < K.height)) {
    throw ShapeError("intrinsics: principal point outside the image");
  }
}

void validate(const Extrinsics& T) {
  const double ortho = (T.R.transpose() * T.R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-6) || !(std::abs(T.R.determinant() - 1.0) <= 1e-6)) {
    throw ShapeError("extrinsics: R is not a rotation");
  }
  if (!T.t.allFinite()) throw ShapeError("extrinsics: non-finite translation");
}

void validate(const CameraPose& pose) {
  validate(pose.K);
  validate(pose.T);
}

Intrinsics intrinsics_from_fov(int width, int height, double fov_deg) {
  Intrinsics K;
  K.width = width;
  K.height = height;
  K.fx = K.fy = width / (2.0 * std::tan(0.5 * fov_deg * std::numbers::pi / 180.0));
  K.cx = 0.5 * (width - 1);
  K.cy = 0.5 * (height - 1);
  return K;
}

Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3(0, 1, 0));  // looking straight along up
  right.normalize();
  const Vec3 down = forward.cross(right);
  Extrinsics T;
  T.R.col(0) = right;
  T.R.col(1) = down;
  T.R.col(2) = forward;
  T.t = eye;
  return T;
}

Vec3 world_to_camera(const Vec3& p_world, const Extrinsics& T) {
  return T.R.transpose() * (p_world - T.t);
}

Projection project(const Vec3& p_world, const CameraPose& pose) {
  const Vec3 pc = world_to_camera(p_world, pose.T);
  Projection out;
  out.z = pc.z();
  if (pc.z() > kZNear) {
    out.u = pose.K.fx * pc.x() / pc.z() + pose.K.cx;
    out.v = pose.K.fy * pc.y() / pc.z() + pose.K.cy;
    // Pixel (i, j) covers [i - 0.5, i + 0.5).
    out.visible = out.u >= -0.5 && out.u < pose.K.width - 0.5 && out.v >= -0.5 && out.v < pose.K.height - 0.5;
  }
  return out;
}

Vec3 unproject(double u, double v, double depth, const CameraPose& pose) {
  if (!(depth > 0)) throw ShapeError("unproject: depth must be positive");
  const Vec3 pc((u - pose.K.cx) / pose.K.fx * depth, (v - pose.K.cy) / pose.K.fy * depth, depth);
  return pose.T.R * pc + pose.T.t;
}

Vec3 ray_direction(double u, double v, const CameraPose& pose) {
  const Vec3 dc((u - pose.K.cx) / pose.K.fx, (v - pose.K.cy) / pose.K.fy, 1.0);
  return (pose.T.R * dc).normalized();
}

template <typename T>
diffcore::Tensor<T> plucker_rays(const CameraPose& pose) {
  const int h = pose.K.height, w = pose.K.width;
  diffcore::Tensor<T> out(diffcore::Shape{h, w, 6});
  const Vec3& o = pose.T.t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 d = ray_direction(x, y, pose);
      const Vec3 m = o.cross(d);
      T* px = out.data() + (static_cast<std::size_t>(y) * w + x) * 6;
      for (int k = 0; k < 3; ++k) {
        px[k] = static_cast<T>(d[k]);
        px[3 + k] = static_cast<T>(m[k]);
      }
    }
  }
  return out;
}

template diffcore::Tensor<float> plucker_rays<float>(const CameraPose&);
template diffcore::Tensor<double> plucker_rays<double>(const CameraPose&);

std::array<long, 3> lattice_index(const Vec3& p, double eps) {
  return {std::lround(p.x() / eps), std::lround(p.y() / eps), std::lround(p.z() / eps)};
}

std::vector<Vec3> voxelize(const std::vector<Vec3>& points, double eps) {
  if (!(eps > 0)) throw ShapeError("voxelize: eps must be positive");
  std::vector<std::array<long, 3>> keys;
  keys.reserve(points.size());
  for (const auto& p : points) keys.push_back(lattice_index(p, eps));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<Vec3> centers;
  centers.reserve(keys.size());
  for (const auto& k : keys) centers.emplace_back(k[0] * eps, k[1] * eps, k[2] * eps);
  return centers;
}

}  // namespace georecon::geometry
