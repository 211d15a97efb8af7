// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "georecon/geometry/camera.hpp"
#include "georecon/nn/layers.hpp"

namespace georecon::encoder {

using diffcore::ParamStore;
using diffcore::Tensor;
using diffcore::Var;

struct EncoderConfig {
  int width = 64;         // channels of both feature maps
  int patch_high = 8;     // high-level patch size
  int stride_low = 4;     // total stride of the low-level conv stack (power of two)
  int high_layers = 4;
  int high_heads = 4;
  bool use_high = true;
  bool use_low = true;
  bool use_rays = true;   // append Plücker rays to the low-level input
};

template <typename T>
struct FeatureLevel {
  Var<T> map;  // [h, w, C]
  int stride = 1;
};

/// Per-view feature maps ordered coarse to fine: high level first (when
/// enabled), then low level.
template <typename T>
struct FeaturePyramid {
  std::vector<FeatureLevel<T>> levels;
  int view_index = 0;
};

/// Source of high-level features for one image.
template <typename T>
class HighBackbone {
 public:
  virtual ~HighBackbone() = default;
  virtual Var<T> encode(const Tensor<T>& image, int view_index) const = 0;
};

/// Patch embedding followed by standard pre-norm transformer layers.
template <typename T>
class TransformerBackbone : public HighBackbone<T> {
 public:
  TransformerBackbone(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& cfg,
                      std::mt19937_64& rng);
  Var<T> encode(const Tensor<T>& image, int view_index) const override;

 private:
  struct Layer {
    nn::RMSNorm<T> norm1, norm2;
    nn::Linear<T> qkv, out;
    nn::FeedForward<T> ffn;
  };
  EncoderConfig cfg_;
  nn::Conv2d<T> patch_;
  std::vector<Layer> layers_;
  nn::RMSNorm<T> final_norm_;
};

/// Precomputed per-view features from a feature file, projected to the
/// model width by a trainable linear layer.
template <typename T>
class ExternalBackbone : public HighBackbone<T> {
 public:
  ExternalBackbone(ParamStore<T>& store, const std::string& prefix, Tensor<float> features, int width,
                   std::mt19937_64& rng);
  Var<T> encode(const Tensor<T>& image, int view_index) const override;
  int feature_height() const { return features_.dim(1); }

 private:
  Tensor<float> features_;  // [n_views, h, w, c]
  nn::Linear<T> proj_;
};

template <typename T>
class ImageEncoder {
 public:
  ImageEncoder(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }
  int levels() const { return (cfg_.use_high ? 1 : 0) + (cfg_.use_low ? 1 : 0); }

  /// RGB [H, W, 3] plus rays [H, W, 6] -> [H / stride_low, W / stride_low, C].
  Var<T> encode_low(const Tensor<T>& image, const Tensor<T>& rays) const;
  /// RGB [H, W, 3] -> [H / patch_high, W / patch_high, C].
  Var<T> encode_high(const Tensor<T>& image, int view_index = 0) const;

  FeaturePyramid<T> encode(const Tensor<T>& image, const geometry::CameraPose& pose, int view_index) const;

  /// Replaces the built-in high-level backbone (e.g. with file features).
  void set_high_backbone(std::shared_ptr<const HighBackbone<T>> backbone) { high_ = std::move(backbone); }

 private:
  EncoderConfig cfg_;
  std::vector<nn::Conv2d<T>> low_;
  std::shared_ptr<const HighBackbone<T>> high_;
};

/// Sinusoidal 2D position table [h * w, C] (row in the first half of the
/// channels, column in the second).
template <typename T>
Tensor<T> position_table_2d(int h, int w, int channels);

/// Feature file: "FEATv001", n_views, h, w, c as u32 LE, then float32 data.
void write_feature_file(const std::string& path, const Tensor<float>& features);
Tensor<float> read_feature_file(const std::string& path);

}  // namespace georecon::encoder
