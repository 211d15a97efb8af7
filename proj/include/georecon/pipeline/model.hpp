// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "georecon/gsplat/gaussians.hpp"
#include "georecon/occupancy/occupancy.hpp"
#include "georecon/pipeline/config.hpp"

namespace georecon::pipeline {

/// Stage two: image encoder + reconstruction transformer + Gaussian head.
template <typename T>
class ReconModel {
 public:
  ReconModel(diffcore::ParamStore<T>& store, const std::string& prefix, const TrainConfig& cfg, std::mt19937_64& rng);

  /// anchors [N, 3] (lattice centers) -> N * per_token Gaussians.
  gsplat::GaussianSet<T> operator()(const std::vector<diffcore::Tensor<T>>& images,
                                    const std::vector<geometry::CameraPose>& poses,
                                    const diffcore::Tensor<T>& anchors) const;

 private:
  encoder::ImageEncoder<T> encoder_;
  geoformer::Geoformer<T> transformer_;
  gsplat::GaussianHead<T> head_;
};

inline constexpr const char* kProposalPrefix = "proposal";
inline constexpr const char* kReconPrefix = "recon";

/// Seed of the parameter initialization stream for a stage.
std::uint64_t init_seed(const TrainConfig& cfg, int stage);

/// Model of either stage with its own parameter store.
template <typename T>
struct ProposalBundle {
  diffcore::ParamStore<T> store;
  std::unique_ptr<occupancy::ProposalModel<T>> model;
  explicit ProposalBundle(const TrainConfig& cfg);
};

template <typename T>
struct ReconBundle {
  diffcore::ParamStore<T> store;
  std::unique_ptr<ReconModel<T>> model;
  explicit ReconBundle(const TrainConfig& cfg);
};

/// Converts float images to the model precision.
template <typename T>
std::vector<diffcore::Tensor<T>> cast_images(const std::vector<diffcore::Tensor<float>>& images);

}  // namespace georecon::pipeline
