// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/scenegen/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "georecon/errors.hpp"

namespace georecon::scenegen {

namespace {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  const Primitive* prim = nullptr;
};

constexpr double kTMin = 1e-6;

// Ray o + t d with d = R (x', y', 1): t is the camera-frame depth.
void intersect_sphere(const Primitive& p, const Vec3& o, const Vec3& d, Hit& best) {
  const Vec3 oc = o - p.center;
  const double r = p.size.x();
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - r * r;
  const double disc = b * b - a * c;
  if (disc < 0) return;
  const double s = std::sqrt(disc);
  double t = (-b - s) / a;
  if (t <= kTMin) t = (-b + s) / a;
  if (t <= kTMin || t >= best.t) return;
  best.t = t;
  best.normal = (o + t * d - p.center).normalized();
  best.prim = &p;
}

void intersect_box(const Primitive& p, const Vec3& o, const Vec3& d, Hit& best) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = 0;
  double sign0 = 1;
  for (int a = 0; a < 3; ++a) {
    const double lo = p.center[a] - p.size[a];
    const double hi = p.center[a] + p.size[a];
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo || o[a] > hi) return;
      continue;
    }
    double ta = (lo - o[a]) / d[a];
    double tb = (hi - o[a]) / d[a];
    double s = -1;  // entering through the low face
    if (ta > tb) {
      std::swap(ta, tb);
      s = 1;
    }
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
      sign0 = s;
    }
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= kTMin || t0 >= best.t) return;  // camera never sits inside a box
  best.t = t0;
  best.normal = Vec3::Zero();
  best.normal[axis0] = sign0;
  best.prim = &p;
}

Hit cast(const SyntheticScene& scene, const Vec3& o, const Vec3& d) {
  Hit best;
  for (const auto& p : scene.primitives) {
    if (p.kind == PrimitiveKind::kSphere) {
      intersect_sphere(p, o, d, best);
    } else {
      intersect_box(p, o, d, best);
    }
  }
  return best;
}

Vec3 camera_ray(double u, double v, const geometry::CameraPose& pose) {
  return pose.T.R * Vec3((u - pose.K.cx) / pose.K.fx, (v - pose.K.cy) / pose.K.fy, 1.0);
}

}  // namespace

Vec3 light_direction() { return Vec3(0.4, -0.3, 0.85).normalized(); }

ViewBundle render_reference(const SyntheticScene& scene, const geometry::CameraPose& pose) {
  geometry::validate(pose);
  const int h = pose.K.height, w = pose.K.width;
  ViewBundle out;
  out.pose = pose;
  out.rgb = diffcore::Tensor<float>::full({h, w, 3}, 1.0f);
  out.depth = diffcore::Tensor<float>::zeros({h, w});
  out.mask = diffcore::Tensor<float>::zeros({h, w});
  const Vec3 light = light_direction();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Hit hit = cast(scene, pose.T.t, camera_ray(x, y, pose));
      if (!hit.prim) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.depth[i] = static_cast<float>(hit.t);
      out.mask[i] = 1.0f;
      const double shade = std::min(1.0, kAmbient + (1.0 - kAmbient) * std::max(0.0, hit.normal.dot(light)));
      for (int c = 0; c < 3; ++c) out.rgb[i * 3 + c] = static_cast<float>(hit.prim->albedo[c] * shade);
    }
  }
  return out;
}

diffcore::Tensor<float> render_depth(const SyntheticScene& scene, const geometry::CameraPose& pose) {
  geometry::validate(pose);
  const int h = pose.K.height, w = pose.K.width;
  diffcore::Tensor<float> depth = diffcore::Tensor<float>::zeros({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Hit hit = cast(scene, pose.T.t, camera_ray(x, y, pose));
      if (hit.prim) depth[static_cast<std::size_t>(y) * w + x] = static_cast<float>(hit.t);
    }
  }
  return depth;
}

double ray_depth(const SyntheticScene& scene, const geometry::CameraPose& pose, double u, double v) {
  const Hit hit = cast(scene, pose.T.t, camera_ray(u, v, pose));
  return hit.prim ? hit.t : 0.0;
}

std::vector<geometry::CameraPose> orbit_cameras(int n_views, const std::vector<double>& elevations_deg,
                                                double radius, int resolution, double fov_deg,
                                                double azimuth0_deg) {
  if (n_views < 1) throw ShapeError("orbit_cameras: need at least one view");
  if (elevations_deg.size() != 1 && elevations_deg.size() != static_cast<std::size_t>(n_views)) {
    throw ShapeError("orbit_cameras: need one elevation or one per view");
  }
  // The unit cube's bounding sphere must sit in front of the camera.
  if (!(radius > std::sqrt(3.0) * 0.5 / std::sin(0.5 * fov_deg * std::numbers::pi / 180.0))) {
    throw ShapeError("orbit_cameras: radius too small for the unit cube to fit the frustum");
  }
  const double deg = std::numbers::pi / 180.0;
  std::vector<geometry::CameraPose> poses;
  for (int i = 0; i < n_views; ++i) {
    const double az = (azimuth0_deg + 360.0 * i / n_views) * deg;
    const double el = elevations_deg[elevations_deg.size() == 1 ? 0 : static_cast<std::size_t>(i)] * deg;
    const Vec3 eye = radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    geometry::CameraPose pose;
    pose.K = geometry::intrinsics_from_fov(resolution, resolution, fov_deg);
    pose.T = geometry::look_at(eye, Vec3::Zero());
    poses.push_back(pose);
  }
  return poses;
}

int rig_high_path_count(int n_views) { return static_cast<int>(std::lround(2.0 * n_views / 3.0)); }

std::vector<geometry::CameraPose> default_rig(int n_views, int resolution, double radius) {
  const int high = rig_high_path_count(n_views);
  const int low = n_views - high;
  auto ramp = [](int n, double a, double b) {
    std::vector<double> e(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) e[static_cast<std::size_t>(i)] = n > 1 ? a + (b - a) * i / (n - 1) : 0.5 * (a + b);
    return e;
  };
  std::vector<geometry::CameraPose> poses;
  if (high > 0) poses = orbit_cameras(high, ramp(high, 5.0, 30.0), radius, resolution);
  if (low > 0) {
    auto low_path = orbit_cameras(low, ramp(low, -5.0, 5.0), radius, resolution);
    poses.insert(poses.end(), low_path.begin(), low_path.end());
  }
  return poses;
}

}  // namespace georecon::scenegen
