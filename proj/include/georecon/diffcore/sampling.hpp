// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace georecon::diffcore {

// Four-texel bilinear stencil on an H x W map with integer-center texels and
// border clamping. Offsets index the flattened [H, W] plane (multiply by C
// for HWC storage).
struct BilinearTaps {
  std::size_t o00, o01, o10, o11;  // (y0,x0) (y0,x1) (y1,x0) (y1,x1)
  double fx, fy;                   // fractional position inside the cell
  bool clamp_x, clamp_y;           // coordinate hit the border: zero coordinate gradient

  double w00() const { return (1.0 - fx) * (1.0 - fy); }
  double w01() const { return fx * (1.0 - fy); }
  double w10() const { return (1.0 - fx) * fy; }
  double w11() const { return fx * fy; }
};

inline BilinearTaps bilinear_taps(double x, double y, int height, int width) {
  BilinearTaps t{};
  t.clamp_x = false;
  t.clamp_y = false;
  const double xmax = static_cast<double>(width - 1);
  const double ymax = static_cast<double>(height - 1);
  if (x < 0.0) {
    x = 0.0;
    t.clamp_x = true;
  } else if (x > xmax) {
    x = xmax;
    t.clamp_x = true;
  }
  if (y < 0.0) {
    y = 0.0;
    t.clamp_y = true;
  } else if (y > ymax) {
    y = ymax;
    t.clamp_y = true;
  }
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  t.fx = x - x0;
  t.fy = y - y0;
  const auto w = static_cast<std::size_t>(width);
  t.o00 = static_cast<std::size_t>(y0) * w + static_cast<std::size_t>(x0);
  t.o01 = static_cast<std::size_t>(y0) * w + static_cast<std::size_t>(x1);
  t.o10 = static_cast<std::size_t>(y1) * w + static_cast<std::size_t>(x0);
  t.o11 = static_cast<std::size_t>(y1) * w + static_cast<std::size_t>(x1);
  return t;
}

}  // namespace georecon::diffcore
