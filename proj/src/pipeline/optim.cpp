// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/optim.hpp"

#include <cmath>
#include <numbers>

#include "georecon/errors.hpp"

namespace georecon::pipeline {

AdamW::AdamW(diffcore::ParamStore<float>& store, AdamWOptions options) : store_(&store), opt_(options) {
  for (const auto& p : store.params()) {
    m_.emplace_back(p.var.size(), 0.0f);
    v_.emplace_back(p.var.size(), 0.0f);
  }
}

void AdamW::step(double lr) {
  auto& params = store_->params();
  if (params.size() != m_.size()) throw ShapeError("AdamW: parameter store changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& var = params[i].var;
    const auto& g = var.grad_or_empty();
    auto& w = var.mutable_value();
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != w.size()) throw ShapeError("AdamW: moment size mismatch for " + params[i].name);
    const bool decay = w.rank() >= 2 && opt_.weight_decay > 0;
    const bool has_grad = g.size() == w.size();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has_grad ? static_cast<double>(g[k]) : 0.0;
      const double mk = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
      const double vk = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      double wk = w[k];
      if (decay) wk -= lr * opt_.weight_decay * wk;
      wk -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + opt_.eps);
      w[k] = static_cast<float>(wk);
    }
  }
}

double cosine_lr(long step, long total, long warmup, double lr, double min_lr) {
  if (warmup > 0 && step < warmup) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const long span = std::max(1L, total - warmup);
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return min_lr + 0.5 * (lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double grad_norm(const diffcore::ParamStore<float>& store) {
  double s = 0.0;
  for (const auto& p : store.params()) {
    for (float g : p.var.grad_or_empty().vec()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

void scale_grads(diffcore::ParamStore<float>& store, double s) {
  for (auto& p : store.params()) {
    auto& g = p.var.node()->grad;
    for (auto& v : g.vec()) v = static_cast<float>(v * s);
  }
}

double clip_grad_norm(diffcore::ParamStore<float>& store, double max_norm) {
  const double norm = grad_norm(store);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) scale_grads(store, max_norm / (norm + 1e-12));
  return norm;
}

}  // namespace georecon::pipeline
