// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "georecon/errors.hpp"
#include "georecon/occupancy/occupancy.hpp"

namespace georecon::occupancy {

using namespace diffcore;

void ProposalConfig::validate() const {
  if (coarse < 1 || fine % coarse != 0) throw ShapeError("proposal: fine resolution must be a multiple of the coarse one");
  if (!(prior > 0.0 && prior < 1.0)) throw ShapeError("proposal: prior must lie in (0, 1)");
  const int levels = (encoder.use_high ? 1 : 0) + (encoder.use_low ? 1 : 0);
  if (levels != transformer.levels) throw ShapeError("proposal: transformer levels do not match the encoder");
  if (encoder.width != transformer.width) throw ShapeError("proposal: encoder and transformer widths differ");
  transformer.validate();
}

namespace {

const ProposalConfig& checked(const ProposalConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

template <typename T>
ProposalModel<T>::ProposalModel(ParamStore<T>& store, const std::string& prefix, const ProposalConfig& cfg,
                                std::mt19937_64& rng)
    : cfg_(checked(cfg)),
      encoder_(store, prefix + ".encoder", cfg.encoder, rng),
      transformer_(store, prefix + ".transformer", cfg.transformer, rng),
      head_(store, prefix + ".head", cfg.transformer.width, cfg.sub() * cfg.sub() * cfg.sub(), rng, nn::Init::kSmall),
      anchors_(coarse_centers<T>(cfg.coarse)) {
  auto& b = head_.b.mutable_value();
  const T bias = static_cast<T>(std::log(cfg.prior / (1.0 - cfg.prior)));
  for (auto& v : b.vec()) v = bias;
}

template <typename T>
Var<T> ProposalModel<T>::logits(const std::vector<Tensor<T>>& images,
                                const std::vector<geometry::CameraPose>& poses) const {
  if (images.size() != poses.size()) throw ShapeError("proposal: image and pose counts differ");
  if (images.empty()) throw ShapeError("proposal: no input views");
  std::vector<encoder::FeaturePyramid<T>> pyramids;
  for (std::size_t v = 0; v < images.size(); ++v) {
    pyramids.push_back(encoder_.encode(images[v], poses[v], static_cast<int>(v)));
  }
  return head_(transformer_(anchors_, pyramids, poses));
}

template <typename T>
OccupancyGrid ProposalModel<T>::predict(const std::vector<Tensor<T>>& images,
                                        const std::vector<geometry::CameraPose>& poses) const {
  NoGradGuard guard;
  const auto z = logits(images, poses).value();
  Tensor<float> probs(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) probs[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(z[i]))));
  return from_token_layout(probs, cfg_.coarse, cfg_.fine);
}

template class ProposalModel<float>;
template class ProposalModel<double>;

}  // namespace georecon::occupancy
