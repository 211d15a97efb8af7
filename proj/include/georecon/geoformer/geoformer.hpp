// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "georecon/encoder/encoder.hpp"
#include "georecon/geometry/camera.hpp"
#include "georecon/nn/layers.hpp"

// Geometry-aware transformer over 3D anchor tokens. Tokens attend to each
// other with 3D rotary positions and to the input views through deformable
// multi-level sampling around their projections.
namespace georecon::geoformer {

using diffcore::ParamStore;
using diffcore::Tensor;
using diffcore::Var;

struct GeoformerConfig {
  int width = 96;
  int heads = 4;
  int layers = 4;
  int points = 8;        // sampling points per head and level
  int levels = 2;        // feature levels per view
  int shared_dim = 32;   // learnable shared part of the anchor token
  int fourier_freqs = 6;
  int ffn_mult = 4;
  bool use_rope = true;
  double rope_scale = 128.0;

  int head_dim() const { return width / heads; }
  void validate() const;
};

template <typename T>
struct AnchorSet {
  Tensor<T> coords;  // [N, 3]
  Var<T> feats;      // [N, C]
  int size() const { return coords.rank() == 2 ? coords.dim(0) : 0; }
};

/// sin / cos of 2^k * pi * coord for k < freqs, per axis: [N, 6 * freqs].
template <typename T>
Tensor<T> fourier_embed(const Tensor<T>& coords, int freqs);

/// One input view seen from a fixed set of anchors: feature levels plus the
/// anchors' projections into each level.
template <typename T>
struct ViewContext {
  std::vector<Var<T>> maps;      // per level [h, w, C]
  Tensor<T> base;                // [N, L, 2] feature-map coordinates
  std::vector<std::uint8_t> visible;
};

/// Projects the anchors into every view once; reused by all blocks.
template <typename T>
std::vector<ViewContext<T>> prepare_views(const Tensor<T>& coords, const std::vector<encoder::FeaturePyramid<T>>& pyramids,
                                          const std::vector<geometry::CameraPose>& poses);

template <typename T>
class AnchorEmbedding {
 public:
  AnchorEmbedding() = default;
  AnchorEmbedding(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg, std::mt19937_64& rng);
  AnchorSet<T> operator()(const Tensor<T>& coords) const;

 private:
  int freqs_ = 6, width_ = 0;
  Var<T> shared_;
  nn::Linear<T> proj_;
};

template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, const Tensor<T>& coords) const;

 private:
  GeoformerConfig cfg_;
  nn::Linear<T> qkv_, out_;
};

template <typename T>
class DeformCrossAttention {
 public:
  DeformCrossAttention() = default;
  DeformCrossAttention(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg,
                       std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, const std::vector<ViewContext<T>>& views) const;

 private:
  GeoformerConfig cfg_;
  nn::Linear<T> value_, offsets_, weights_, view_score_, out_;
};

template <typename T>
class GeoBlock {
 public:
  GeoBlock() = default;
  GeoBlock(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg, std::mt19937_64& rng);
  AnchorSet<T> operator()(const AnchorSet<T>& tokens, const std::vector<ViewContext<T>>& views) const;

 private:
  nn::RMSNorm<T> norm1_, norm2_, norm3_;
  SelfAttention<T> self_attn_;
  DeformCrossAttention<T> cross_attn_;
  nn::FeedForward<T> ffn_;
};

/// Anchor embedding, a stack of blocks and a final RMSNorm.
template <typename T>
class Geoformer {
 public:
  Geoformer(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg, std::mt19937_64& rng);

  const GeoformerConfig& config() const { return cfg_; }
  AnchorSet<T> embed(const Tensor<T>& coords) const { return embed_(coords); }
  AnchorSet<T> run_blocks(AnchorSet<T> tokens, const std::vector<ViewContext<T>>& views) const;
  /// Token features [N, C] after the final norm.
  Var<T> operator()(const Tensor<T>& coords, const std::vector<encoder::FeaturePyramid<T>>& pyramids,
                    const std::vector<geometry::CameraPose>& poses) const;

 private:
  GeoformerConfig cfg_;
  AnchorEmbedding<T> embed_;
  std::vector<GeoBlock<T>> blocks_;
  nn::RMSNorm<T> final_norm_;
};

}  // namespace georecon::geoformer
