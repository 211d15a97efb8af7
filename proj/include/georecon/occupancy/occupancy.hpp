// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "georecon/encoder/encoder.hpp"
#include "georecon/geoformer/geoformer.hpp"
#include "georecon/scenegen/render.hpp"

// Occupancy grids over [-0.5, 0.5]^3: ground truth from posed depth maps,
// the coarse-to-fine proposal network, anchor selection and the stage-1 loss.
//
// Grid cell (ix, iy, iz) of a resolution-r grid is the lattice voxel centered
// at ((ix, iy, iz) - r/2) / r, i.e. the voxel a point snaps to under
// round-half-away-from-zero with eps = 1/r. Lattice index r/2 lies on the
// +0.5 face and is clipped. Storage is x-major (x slowest).
namespace georecon::occupancy {

using diffcore::ParamStore;
using diffcore::Tensor;
using diffcore::Var;
using geometry::Vec3;

struct OccupancyGrid {
  int resolution = 0;
  std::vector<float> values;  // resolution^3, probabilities or 0/1

  OccupancyGrid() = default;
  explicit OccupancyGrid(int res, float fill = 0.0f);

  std::size_t size() const { return values.size(); }
  std::size_t index(int ix, int iy, int iz) const {
    const auto r = static_cast<std::size_t>(resolution);
    return (static_cast<std::size_t>(ix) * r + static_cast<std::size_t>(iy)) * r + static_cast<std::size_t>(iz);
  }
  Vec3 center(std::size_t linear) const;
  /// Cell containing p under lattice snapping, or -1 when clipped.
  long cell_of(const Vec3& p) const;
  std::size_t count_above(float threshold = 0.5f) const;
  double occupied_fraction(float threshold = 0.5f) const;
  void validate() const;
};

/// Voxels hit by any foreground pixel of any view. Views without depth are
/// skipped; an all-background input yields an empty grid.
OccupancyGrid occupancy_gt(const std::vector<scenegen::ViewBundle>& views, int resolution = 128);

/// Marks the cells of the given points (e.g. analytic surface samples).
OccupancyGrid occupancy_from_points(const std::vector<Vec3>& points, int resolution = 128);

/// Dense orbit rig used to build ground truth: three rings of views.
std::vector<geometry::CameraPose> gt_rig(int n_views = 36, int image_resolution = 512);

/// Renders depth from gt_rig and runs occupancy_gt.
OccupancyGrid occupancy_from_scene(const scenegen::SyntheticScene& scene, int resolution = 128, int n_views = 36,
                                   int image_resolution = 512);

/// Intersection over union of the thresholded grids.
double grid_iou(const OccupancyGrid& a, const OccupancyGrid& b, float threshold = 0.5f);

/// Centers of a coarse x coarse x coarse partition of the cube, x-major.
template <typename T>
Tensor<T> coarse_centers(int coarse);

/// Reorders a fine grid into per-coarse-token rows: [coarse^3, sub^3] with
/// sub = fine / coarse, both in x-major order.
template <typename T>
Tensor<T> to_token_layout(const OccupancyGrid& grid, int coarse);
OccupancyGrid from_token_layout(const Tensor<float>& rows, int coarse, int fine);

/// Centers of cells with value > threshold, sorted by linear index. Over
/// max_tokens: the most probable cells (ties to the lower index). None above
/// threshold: the 64 most probable cells.
std::vector<std::size_t> select_cells(const OccupancyGrid& grid, float threshold, std::size_t max_tokens);
template <typename T>
Tensor<T> select_anchors(const OccupancyGrid& grid, float threshold, std::size_t max_tokens);

inline constexpr std::size_t kFallbackAnchors = 64;

/// Mean binary cross-entropy plus the scene-class affinity term
/// -(log P + log R + log S) with soft precision, recall and specificity.
/// `pred` holds probabilities of the same shape as `gt`.
template <typename T>
Var<T> stage1_loss(const Var<T>& pred, const Tensor<T>& gt);
/// Same loss from logits, numerically stable for saturated predictions.
template <typename T>
Var<T> stage1_loss_logits(const Var<T>& logits, const Tensor<T>& gt);
template <typename T>
Var<T> affinity_loss(const Var<T>& pred, const Tensor<T>& gt);

struct ProposalConfig {
  encoder::EncoderConfig encoder;
  geoformer::GeoformerConfig transformer;
  int coarse = 16;
  int fine = 128;
  double prior = 0.03;  // initial occupancy probability of every cell

  int sub() const { return fine / coarse; }
  void validate() const;
};

template <typename T>
class ProposalModel {
 public:
  ProposalModel(ParamStore<T>& store, const std::string& prefix, const ProposalConfig& cfg, std::mt19937_64& rng);

  const ProposalConfig& config() const { return cfg_; }
  /// Logits [coarse^3, sub^3] in token layout.
  Var<T> logits(const std::vector<Tensor<T>>& images, const std::vector<geometry::CameraPose>& poses) const;
  /// Probability grid at the fine resolution (no gradient recording).
  OccupancyGrid predict(const std::vector<Tensor<T>>& images, const std::vector<geometry::CameraPose>& poses) const;

 private:
  ProposalConfig cfg_;
  encoder::ImageEncoder<T> encoder_;
  geoformer::Geoformer<T> transformer_;
  nn::Linear<T> head_;
  Tensor<T> anchors_;
};

/// Grid file: "OCCGv001", resolution (u32 LE), then either resolution^3 bits
/// packed LSB-first in x-major order (binary) or resolution^3 float32 values.
void write_occupancy(const std::string& path, const OccupancyGrid& grid, bool binary);
OccupancyGrid read_occupancy(const std::string& path);

}  // namespace georecon::occupancy
