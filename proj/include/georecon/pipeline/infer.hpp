// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "georecon/losses/losses.hpp"
#include "georecon/pipeline/checkpoint.hpp"
#include "georecon/pipeline/dataset.hpp"
#include "georecon/pipeline/model.hpp"

namespace georecon::pipeline {

struct InferenceResult {
  diffcore::Tensor<float> gaussians;  // [G, 14]
  occupancy::OccupancyGrid grid;      // proposal probabilities (empty with external anchors)
  diffcore::Tensor<float> anchors;    // [N, 3]
};

/// Both trained stages, ready for inference. The proposal stage is optional
/// when anchors are supplied by the caller.
class Reconstructor {
 public:
  Reconstructor(const Checkpoint* stage1, const Checkpoint& stage2);

  const TrainConfig& recon_config() const { return cfg2_; }
  bool has_proposal() const { return static_cast<bool>(proposal_); }

  /// proposal -> select_anchors(max_tokens) -> reconstruction -> decode.
  InferenceResult infer(const std::vector<diffcore::Tensor<float>>& images,
                        const std::vector<geometry::CameraPose>& poses, std::size_t max_tokens) const;
  /// Reconstruction from given anchors.
  InferenceResult reconstruct(const std::vector<diffcore::Tensor<float>>& images,
                              const std::vector<geometry::CameraPose>& poses,
                              const diffcore::Tensor<float>& anchors) const;

 private:
  TrainConfig cfg1_, cfg2_;
  std::unique_ptr<ProposalBundle<float>> proposal_;
  std::unique_ptr<ReconBundle<float>> recon_;
};

/// Writes gaussians.3dgs and, when present, occupancy.occg into dir.
void write_inference(const std::string& dir, const InferenceResult& result);

/// Renders a Gaussian file at each pose: image, alpha and depth tensors.
struct RenderedView {
  diffcore::Tensor<float> image, alpha, depth;
};
std::vector<RenderedView> render_views(const diffcore::Tensor<float>& gaussians,
                                       const std::vector<geometry::CameraPose>& poses);

struct ImageScores {
  double psnr = 0, ssim = 0, perc_proxy = 0;
};
/// Mean PSNR / SSIM / perceptual proxy of predictions against references.
ImageScores score_images(const std::vector<diffcore::Tensor<float>>& pred,
                         const std::vector<diffcore::Tensor<float>>& target, std::uint64_t proxy_seed = 1234);

/// n centers drawn with probability proportional to opacity.
losses::PointSet sample_gaussian_centers(const diffcore::Tensor<float>& gaussians, std::size_t n, std::uint64_t seed);

struct EvalOptions {
  std::vector<int> input_views{4, 8, 12};
  int held_out = 4;
  std::size_t points = 16000;  // 0 skips chamfer and F-score
  bool gt_anchors = false;
  std::size_t max_tokens = 16384;
  std::uint64_t seed = 0;
};

/// One metrics row per (scene, input-view count).
std::vector<losses::MetricsRow> evaluate(const Reconstructor& model, const std::vector<SceneRecord>& scenes,
                                         const EvalOptions& opt);

double mean_psnr(const std::vector<losses::MetricsRow>& rows, int n_input_views);

}  // namespace georecon::pipeline
