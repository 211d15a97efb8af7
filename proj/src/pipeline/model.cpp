// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/model.hpp"

#include "georecon/errors.hpp"

namespace georecon::pipeline {

using diffcore::Tensor;

template <typename T>
ReconModel<T>::ReconModel(diffcore::ParamStore<T>& store, const std::string& prefix, const TrainConfig& cfg,
                          std::mt19937_64& rng)
    : encoder_(store, prefix + ".encoder", recon_encoder_config(cfg), rng),
      transformer_(store, prefix + ".transformer", recon_transformer_config(cfg), rng),
      head_(store, prefix + ".head", decode_config(cfg), rng) {}

template <typename T>
gsplat::GaussianSet<T> ReconModel<T>::operator()(const std::vector<Tensor<T>>& images,
                                                 const std::vector<geometry::CameraPose>& poses,
                                                 const Tensor<T>& anchors) const {
  if (images.size() != poses.size()) throw ShapeError("recon: image and pose counts differ");
  if (images.empty()) throw ShapeError("recon: no input views");
  if (anchors.rank() != 2 || anchors.dim(1) != 3) throw ShapeError("recon: anchors must be [N, 3]");
  std::vector<encoder::FeaturePyramid<T>> pyramids;
  for (std::size_t v = 0; v < images.size(); ++v) {
    pyramids.push_back(encoder_.encode(images[v], poses[v], static_cast<int>(v)));
  }
  return head_(transformer_(anchors, pyramids, poses), anchors);
}

std::uint64_t init_seed(const TrainConfig& cfg, int stage) {
  return cfg.seed * 7919ULL + static_cast<std::uint64_t>(stage) * 104729ULL + 11ULL;
}

template <typename T>
ProposalBundle<T>::ProposalBundle(const TrainConfig& cfg) {
  std::mt19937_64 rng(init_seed(cfg, 1));
  model = std::make_unique<occupancy::ProposalModel<T>>(store, kProposalPrefix, proposal_config(cfg), rng);
}

template <typename T>
ReconBundle<T>::ReconBundle(const TrainConfig& cfg) {
  std::mt19937_64 rng(init_seed(cfg, 2));
  model = std::make_unique<ReconModel<T>>(store, kReconPrefix, cfg, rng);
}

template <typename T>
std::vector<Tensor<T>> cast_images(const std::vector<Tensor<float>>& images) {
  std::vector<Tensor<T>> out;
  out.reserve(images.size());
  for (const auto& im : images) {
    if constexpr (std::is_same_v<T, float>) {
      out.push_back(im);
    } else {
      Tensor<T> t(im.shape());
      for (std::size_t i = 0; i < im.size(); ++i) t[i] = static_cast<T>(im[i]);
      out.push_back(std::move(t));
    }
  }
  return out;
}

template class ReconModel<float>;
template class ReconModel<double>;
template struct ProposalBundle<float>;
template struct ProposalBundle<double>;
template struct ReconBundle<float>;
template struct ReconBundle<double>;
template std::vector<Tensor<float>> cast_images(const std::vector<Tensor<float>>&);
template std::vector<Tensor<double>> cast_images(const std::vector<Tensor<float>>&);

}  // namespace georecon::pipeline
