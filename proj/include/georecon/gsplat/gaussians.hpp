// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "georecon/nn/layers.hpp"

namespace georecon::gsplat {

using diffcore::ParamStore;
using diffcore::Tensor;
using diffcore::Var;

/// Packed Gaussian row layout, shared with the export file.
inline constexpr int kCenter = 0;     // 3
inline constexpr int kColor = 3;      // 3, in [0, 1]
inline constexpr int kScale = 6;      // 3, in (0, s_max]
inline constexpr int kRotation = 9;   // 4, unit quaternion (w, x, y, z)
inline constexpr int kOpacity = 13;   // 1, in (0, 1)
inline constexpr int kGaussianDim = 14;

/// G Gaussians as rows of a [G, 14] variable.
template <typename T>
struct GaussianSet {
  Var<T> params;
  int size() const { return params.defined() ? params.dim(0) : 0; }
  /// Checks ranges, unit quaternions and finiteness.
  void validate() const;
};

template <typename T>
GaussianSet<T> empty_gaussians();

struct DecodeConfig {
  int width = 96;       // token width
  int hidden = 128;     // MLP hidden width (two hidden layers)
  int per_token = 8;    // Gaussians per token
  double voxel = 1.0 / 128;  // lattice spacing of the anchors

  double o_max() const { return 2.0 * voxel; }
  double s_max() const { return 4.0 * voxel; }
};

/// Activations applied to raw head outputs [G, 14] (offset 3, color 3,
/// scale 3, quaternion 4, opacity 1): sigmoid offset scaled to o_max and
/// shifted by -o_max/2 around the anchor, sigmoid color, sigmoid scale times
/// s_max, quaternion (1, 0, 0, 0) + raw normalized, sigmoid opacity.
template <typename T>
Var<T> activate_gaussians(const Var<T>& raw, const Tensor<T>& anchors, T o_max, T s_max);

template <typename T>
class GaussianHead {
 public:
  GaussianHead(ParamStore<T>& store, const std::string& prefix, const DecodeConfig& cfg, std::mt19937_64& rng);
  const DecodeConfig& config() const { return cfg_; }
  /// Raw outputs [N * per_token, 14].
  Var<T> raw(const Var<T>& tokens) const;
  /// tokens [N, C] at anchors [N, 3] -> N * per_token Gaussians.
  GaussianSet<T> operator()(const Var<T>& tokens, const Tensor<T>& anchors) const;

 private:
  DecodeConfig cfg_;
  nn::Linear<T> fc1_, fc2_, out_;
};

/// Export file: "3DGSv001", count (u32 LE), then count x 14 float32 in the
/// packed layout.
void write_gaussians(const std::string& path, const Tensor<float>& params);
Tensor<float> read_gaussians(const std::string& path);

}  // namespace georecon::gsplat
