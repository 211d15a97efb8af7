// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "georecon/gsplat/gaussians.hpp"
#include "georecon/occupancy/occupancy.hpp"

namespace georecon::pipeline {

// Line-delimited `key = value` text. Blank lines and `#` comments are
// ignored; unknown keys are an error. Every key below is written by
// config_to_text, so a resolved config always reads back unchanged.
struct TrainConfig {
  int stage = 1;
  int epochs = 1;      // passes over the training scenes
  int steps = 0;       // total optimizer steps; overrides epochs when > 0
  double lr = 1e-4;
  double min_lr = 0.0;  // cosine floor
  int warmup = 100;
  double beta1 = 0.9, beta2 = 0.95;
  double weight_decay = 0.05;  // applied to matrices and conv kernels only
  double adam_eps = 1e-8;
  double grad_clip = 4.0;
  int accumulation = 1;  // micro-batches per step; gradients are averaged

  std::size_t max_tokens_train = 4096;
  std::size_t max_tokens_infer = 16384;
  int views_total = 8;
  int views_min = 1, views_max = 7;
  int fixed_views = 0;          // > 0 replaces dynamic sampling by a constant count
  bool supervise_inputs = false;  // also render the input views in stage 2
  int max_scenes = 0;           // > 0 trains on the first N scenes only

  int resolution = 64;

  // Model dims shared by both stages.
  int width = 48;
  int heads = 2;
  int points = 4;
  int shared_dim = 16;
  int fourier_freqs = 6;
  int ffn_mult = 2;
  bool use_rope = true;
  bool use_high = true, use_low = true, use_rays = true;
  int patch_high = 8;
  int stride_low = 4;
  int encoder_layers = 2;
  int encoder_heads = 2;

  // Stage 1.
  int proposal_layers = 2;
  int coarse = 8;
  int fine = 32;
  double prior = 0.05;

  // Stage 2.
  int recon_layers = 2;
  int per_token = 4;
  int decode_hidden = 64;
  std::string anchors = "gt";  // gt | predicted
  std::string stage1_checkpoint;
  double threshold = 0.5;

  std::uint64_t seed = 0;
  std::uint64_t proxy_seed = 1234;

  int input_count_min() const { return fixed_views > 0 ? fixed_views : views_min; }
  int input_count_max() const { return fixed_views > 0 ? fixed_views : views_max; }
  void validate() const;
};

TrainConfig parse_config(const std::string& text);
std::string config_to_text(const TrainConfig& cfg);
/// Reads a config file and applies the GEO_RECON_SEED override.
TrainConfig load_config(const std::string& path);
void save_config(const std::string& path, const TrainConfig& cfg);
/// Applies one `key = value` assignment; used for command-line overrides.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
void apply_seed_override(TrainConfig& cfg);

occupancy::ProposalConfig proposal_config(const TrainConfig& cfg);
encoder::EncoderConfig recon_encoder_config(const TrainConfig& cfg);
geoformer::GeoformerConfig recon_transformer_config(const TrainConfig& cfg);
gsplat::DecodeConfig decode_config(const TrainConfig& cfg);

}  // namespace georecon::pipeline
