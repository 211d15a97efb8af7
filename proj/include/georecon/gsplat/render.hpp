// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "georecon/geometry/camera.hpp"
#include "georecon/gsplat/gaussians.hpp"

namespace georecon::gsplat {

struct RenderOptions {
  std::array<double, 3> background{1.0, 1.0, 1.0};
  double low_pass = 0.3;        // added to the 2D covariance diagonal, pixels^2
  double min_weight = 1.0 / 255.0;  // splat footprint ends where alpha * G falls below this
  double near = 0.05;           // Gaussians closer than this camera z are dropped
  double max_condition = 1e8;   // 2D covariances worse than this are dropped
  double min_transmittance = 1e-4;  // pixels this saturated stop accepting splats
};

template <typename T>
struct RenderOut {
  Var<T> image;  // [H, W, 3]
  Var<T> alpha;  // [H, W]
  Var<T> depth;  // [H, W], camera z of the composited surface
};

/// Packed render [H, W, 5] = (r, g, b, alpha, depth). Gaussians are sorted
/// front to back by the camera z of their centers and composited per pixel
/// with transmittance; depth is the alpha-normalized expected z.
template <typename T>
Var<T> render_packed(const Var<T>& gaussians, const geometry::CameraPose& pose, const RenderOptions& opt = {});

template <typename T>
RenderOut<T> render(const GaussianSet<T>& g, const geometry::CameraPose& pose, const RenderOptions& opt = {});

}  // namespace georecon::gsplat
