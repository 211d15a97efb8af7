// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "georecon/geometry/camera.hpp"
#include "georecon/gsplat/render.hpp"
#include "georecon/scenegen/render.hpp"

// Reconstruction objective and evaluation metrics. Images are [H, W, 3] in
// [0, 1]; masks and depth maps are [H, W].
namespace georecon::losses {

using diffcore::Tensor;
using diffcore::Var;

/// Fixed random three-level convolution stack standing in for a learned
/// perceptual metric. Weights depend only on the seed and are never trained.
template <typename T>
class PerceptualProxy {
 public:
  explicit PerceptualProxy(std::uint64_t seed = 1234);
  /// Sum over levels of the mean squared distance between per-pixel
  /// unit-normalized features.
  Var<T> operator()(const Var<T>& a, const Var<T>& b) const;
  std::uint64_t seed() const { return seed_; }

 private:
  struct Level {
    Var<T> w, b, g;
  };
  std::uint64_t seed_;
  std::vector<Level> levels_;
};

inline constexpr double kPerceptualWeight = 2.0;
inline constexpr double kDepthWeight = 0.2;

template <typename T>
struct ImageLoss {
  Var<T> l2;    // mean squared error
  Var<T> perc;  // 2 x perceptual proxy
};

template <typename T>
ImageLoss<T> image_loss(const Var<T>& pred, const Tensor<T>& target, const PerceptualProxy<T>& proxy);

template <typename T>
Var<T> mask_loss(const Var<T>& pred, const Tensor<T>& target);

/// Image gradient magnitude: channel mean of |forward difference| along x
/// plus along y; the last column / row uses a zero difference.
template <typename T>
Tensor<T> image_gradient_magnitude(const Tensor<T>& image);

/// (1 / HW) sum over foreground pixels (target > 0) of
/// exp(-dI) * log(1 + |pred - target|).
template <typename T>
Var<T> depth_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& image);

struct LossBreakdown {
  double total = 0, img_l2 = 0, img_perc = 0, mask = 0, depth = 0;
  LossBreakdown& operator+=(const LossBreakdown& o);
  /// |total - (img_l2 + img_perc + mask + 0.2 depth)| within tol.
  bool consistent(double tol = 1e-6) const;
};

template <typename T>
struct ViewLoss {
  Var<T> total;
  LossBreakdown parts;
};

/// Loss of one rendered target view against its reference bundle.
template <typename T>
ViewLoss<T> view_loss(const gsplat::RenderOut<T>& render, const scenegen::ViewBundle& target,
                      const PerceptualProxy<T>& proxy);

/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const Tensor<float>& a, const Tensor<float>& b);
inline constexpr double kMaxPsnr = 99.0;

/// Mean SSIM over channels with an 11 x 11 Gaussian window (sigma 1.5) and
/// the usual constants for data range 1; valid windows only.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

using PointSet = std::vector<geometry::Vec3>;

/// Mean of the two directed mean nearest-neighbour distances.
double chamfer(const PointSet& p, const PointSet& q);
/// Harmonic mean of precision (p near q) and recall (q near p) at tau.
double fscore(const PointSet& p, const PointSet& q, double tau = 0.2);

struct MetricsRow {
  std::string scene;
  int n_input_views = 0;
  double psnr = 0, ssim = 0, perc_proxy = 0, chamfer = 0, fscore = 0;
};

std::string to_json_line(const MetricsRow& row);
MetricsRow metrics_from_json_line(const std::string& line);
void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace georecon::losses
