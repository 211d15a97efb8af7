// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "georecon/errors.hpp"
#include "georecon/io/binary.hpp"
#include "georecon/occupancy/occupancy.hpp"

namespace georecon::occupancy {

using diffcore::Shape;

OccupancyGrid::OccupancyGrid(int res, float fill) : resolution(res) {
  if (res < 2 || res % 2 != 0) throw ShapeError("occupancy grid resolution must be even, got " + std::to_string(res));
  const auto r = static_cast<std::size_t>(res);
  values.assign(r * r * r, fill);
}

Vec3 OccupancyGrid::center(std::size_t linear) const {
  const auto r = static_cast<std::size_t>(resolution);
  const auto iz = static_cast<double>(linear % r);
  const auto iy = static_cast<double>((linear / r) % r);
  const auto ix = static_cast<double>(linear / (r * r));
  const double half = resolution / 2, inv = 1.0 / resolution;
  return Vec3((ix - half) * inv, (iy - half) * inv, (iz - half) * inv);
}

long OccupancyGrid::cell_of(const Vec3& p) const {
  const auto k = geometry::lattice_index(p, 1.0 / resolution);
  const long half = resolution / 2;
  long out = 0;
  for (int a = 0; a < 3; ++a) {
    const long i = k[static_cast<std::size_t>(a)] + half;
    if (i < 0 || i >= resolution) return -1;
    out = out * resolution + i;
  }
  return out;
}

std::size_t OccupancyGrid::count_above(float threshold) const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [&](float v) { return v > threshold; }));
}

double OccupancyGrid::occupied_fraction(float threshold) const {
  return values.empty() ? 0.0 : static_cast<double>(count_above(threshold)) / static_cast<double>(values.size());
}

void OccupancyGrid::validate() const {
  const auto r = static_cast<std::size_t>(resolution);
  if (resolution < 2 || values.size() != r * r * r) throw ShapeError("occupancy grid size does not match its resolution");
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("occupancy value outside [0, 1]");
  }
}

OccupancyGrid occupancy_gt(const std::vector<scenegen::ViewBundle>& views, int resolution) {
  OccupancyGrid grid(resolution);
  for (const auto& view : views) {
    if (view.depth.size() == 0) continue;
    const int h = view.depth.dim(0), w = view.depth.dim(1);
    const bool has_mask = view.mask.size() == view.depth.size();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
        const double d = view.depth[i];
        if (has_mask && view.mask[i] < 0.5f) continue;
        if (!(d > 0.0)) continue;
        const long cell = grid.cell_of(geometry::unproject(x, y, d, view.pose));
        if (cell >= 0) grid.values[static_cast<std::size_t>(cell)] = 1.0f;
      }
    }
  }
  return grid;
}

OccupancyGrid occupancy_from_points(const std::vector<Vec3>& points, int resolution) {
  OccupancyGrid grid(resolution);
  for (const auto& p : points) {
    const long cell = grid.cell_of(p);
    if (cell >= 0) grid.values[static_cast<std::size_t>(cell)] = 1.0f;
  }
  return grid;
}

std::vector<geometry::CameraPose> gt_rig(int n_views, int image_resolution) {
  if (n_views < 3 || n_views % 3 != 0) throw ShapeError("gt_rig: view count must be a positive multiple of 3");
  const int per_ring = n_views / 3;
  const double elevations[3] = {-35.0, 10.0, 55.0};
  std::vector<geometry::CameraPose> poses;
  for (int ring = 0; ring < 3; ++ring) {
    auto r = scenegen::orbit_cameras(per_ring, {elevations[ring]}, 2.0, image_resolution, 60.0,
                                     ring * 120.0 / per_ring);
    poses.insert(poses.end(), r.begin(), r.end());
  }
  return poses;
}

OccupancyGrid occupancy_from_scene(const scenegen::SyntheticScene& scene, int resolution, int n_views,
                                   int image_resolution) {
  OccupancyGrid grid(resolution);
  for (const auto& pose : gt_rig(n_views, image_resolution)) {
    scenegen::ViewBundle view;
    view.pose = pose;
    view.depth = scenegen::render_depth(scene, pose);
    const auto one = occupancy_gt({view}, resolution);
    for (std::size_t i = 0; i < grid.size(); ++i) grid.values[i] = std::max(grid.values[i], one.values[i]);
  }
  return grid;
}

double grid_iou(const OccupancyGrid& a, const OccupancyGrid& b, float threshold) {
  if (a.resolution != b.resolution) throw ShapeError("grid_iou: resolution mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values[i] > threshold, y = b.values[i] > threshold;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename T>
Tensor<T> coarse_centers(int coarse) {
  if (coarse < 1) throw ShapeError("coarse_centers: resolution must be positive");
  Tensor<T> out(Shape{coarse * coarse * coarse, 3});
  std::size_t o = 0;
  for (int x = 0; x < coarse; ++x) {
    for (int y = 0; y < coarse; ++y) {
      for (int z = 0; z < coarse; ++z) {
        for (int v : {x, y, z}) out[o++] = static_cast<T>(-0.5 + (v + 0.5) / coarse);
      }
    }
  }
  return out;
}

namespace {

// Linear fine index of subvoxel s inside coarse token t.
std::vector<std::size_t> token_layout_index(int coarse, int fine) {
  if (coarse < 1 || fine % coarse != 0) throw ShapeError("fine resolution must be a multiple of the coarse one");
  const int sub = fine / coarse;
  const auto f = static_cast<std::size_t>(fine);
  std::vector<std::size_t> idx;
  idx.reserve(f * f * f);
  for (int tx = 0; tx < coarse; ++tx) {
    for (int ty = 0; ty < coarse; ++ty) {
      for (int tz = 0; tz < coarse; ++tz) {
        for (int sx = 0; sx < sub; ++sx) {
          for (int sy = 0; sy < sub; ++sy) {
            for (int sz = 0; sz < sub; ++sz) {
              const auto ix = static_cast<std::size_t>(tx * sub + sx);
              const auto iy = static_cast<std::size_t>(ty * sub + sy);
              const auto iz = static_cast<std::size_t>(tz * sub + sz);
              idx.push_back((ix * f + iy) * f + iz);
            }
          }
        }
      }
    }
  }
  return idx;
}

}  // namespace

template <typename T>
Tensor<T> to_token_layout(const OccupancyGrid& grid, int coarse) {
  const auto idx = token_layout_index(coarse, grid.resolution);
  const int sub = grid.resolution / coarse;
  Tensor<T> out(Shape{coarse * coarse * coarse, sub * sub * sub});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = static_cast<T>(grid.values[idx[i]]);
  return out;
}

OccupancyGrid from_token_layout(const Tensor<float>& rows, int coarse, int fine) {
  const auto idx = token_layout_index(coarse, fine);
  if (rows.size() != idx.size()) throw ShapeError("from_token_layout: size mismatch");
  OccupancyGrid grid(fine);
  for (std::size_t i = 0; i < idx.size(); ++i) grid.values[idx[i]] = rows[i];
  return grid;
}

std::vector<std::size_t> select_cells(const OccupancyGrid& grid, float threshold, std::size_t max_tokens) {
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.values[i] > threshold) cells.push_back(i);
  }
  auto by_prob = [&](std::size_t a, std::size_t b) {
    return grid.values[a] != grid.values[b] ? grid.values[a] > grid.values[b] : a < b;
  };
  std::size_t keep = max_tokens;
  if (cells.empty()) {
    cells.resize(grid.size());
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    keep = std::min(max_tokens, kFallbackAnchors);
  }
  if (cells.size() > keep) {
    std::nth_element(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep), cells.end(), by_prob);
    cells.resize(keep);
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

template <typename T>
Tensor<T> select_anchors(const OccupancyGrid& grid, float threshold, std::size_t max_tokens) {
  const auto cells = select_cells(grid, threshold, max_tokens);
  Tensor<T> out(Shape{static_cast<int>(cells.size()), 3});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Vec3 c = grid.center(cells[i]);
    for (int a = 0; a < 3; ++a) out[i * 3 + static_cast<std::size_t>(a)] = static_cast<T>(c[a]);
  }
  return out;
}

void write_occupancy(const std::string& path, const OccupancyGrid& grid, bool binary) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  io::write_magic(out, "OCCGv001");
  io::write_u32(out, static_cast<std::uint32_t>(grid.resolution));
  if (binary) {
    std::vector<unsigned char> bits((grid.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid.values[i] > 0.5f) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    }
    out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  } else {
    io::write_f32_array(out, grid.values.data(), grid.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

OccupancyGrid read_occupancy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  io::expect_magic(in, "OCCGv001", path);
  const auto res = io::read_u32(in, path);
  if (res < 2 || res > 1024 || res % 2 != 0) throw IoError(path + ": bad grid resolution");
  const auto header = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::size_t>(in.tellg() - header);
  in.seekg(header);
  OccupancyGrid grid(static_cast<int>(res));
  const std::size_t n = grid.size();
  if (payload == (n + 7) / 8) {
    std::vector<unsigned char> bits(payload);
    in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(payload));
    if (!in) throw IoError(path + ": truncated grid");
    for (std::size_t i = 0; i < n; ++i) grid.values[i] = (bits[i / 8] >> (i % 8)) & 1u ? 1.0f : 0.0f;
  } else if (payload == n * 4) {
    io::read_f32_array(in, grid.values.data(), n, path);
    for (float v : grid.values) {
      if (!(v >= 0.0f && v <= 1.0f)) throw IoError(path + ": probability outside [0, 1]");
    }
  } else {
    throw IoError(path + ": payload size matches neither the bit-packed nor the float layout");
  }
  return grid;
}

template Tensor<float> coarse_centers<float>(int);
template Tensor<double> coarse_centers<double>(int);
template Tensor<float> to_token_layout<float>(const OccupancyGrid&, int);
template Tensor<double> to_token_layout<double>(const OccupancyGrid&, int);
template Tensor<float> select_anchors<float>(const OccupancyGrid&, float, std::size_t);
template Tensor<double> select_anchors<double>(const OccupancyGrid&, float, std::size_t);

}  // namespace georecon::occupancy
