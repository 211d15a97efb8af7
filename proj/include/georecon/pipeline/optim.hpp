// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "georecon/diffcore/autograd.hpp"

namespace georecon::pipeline {

struct AdamWOptions {
  double beta1 = 0.9, beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Decoupled weight decay Adam over a float parameter store. Decay applies
/// only to parameters of rank >= 2 (weights, not biases or norm gains).
class AdamW {
 public:
  AdamW(diffcore::ParamStore<float>& store, AdamWOptions options);

  void step(double lr);
  std::uint64_t steps_taken() const { return t_; }

  // Moments are exposed for checkpointing, one vector per parameter in
  // store order.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }

 private:
  diffcore::ParamStore<float>* store_;
  AdamWOptions opt_;
  std::vector<std::vector<float>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Linear warmup to `lr` over `warmup` steps, then cosine decay to `min_lr`
/// at `total` steps. `step` is zero based.
double cosine_lr(long step, long total, long warmup, double lr, double min_lr);

/// Global L2 norm over all parameter gradients.
double grad_norm(const diffcore::ParamStore<float>& store);
/// Rescales gradients so the global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(diffcore::ParamStore<float>& store, double max_norm);
/// Multiplies every gradient by s (gradient accumulation averaging).
void scale_grads(diffcore::ParamStore<float>& store, double s);

}  // namespace georecon::pipeline
