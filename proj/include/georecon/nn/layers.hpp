// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "georecon/diffcore/ops.hpp"

// Small parameterized building blocks shared by the encoder, the
// geometry-aware transformer and the decoding heads. Every layer registers
// its tensors in a caller-owned ParamStore under a name prefix.
namespace georecon::nn {

using diffcore::ParamStore;
using diffcore::Shape;
using diffcore::Tensor;
using diffcore::Var;

enum class Init { kFanIn, kSmall, kZero };

template <typename T>
Tensor<T> init_tensor(Shape shape, int fan_in, Init init, std::mt19937_64& rng, double small_std = 0.02);

template <typename T>
struct Linear {
  Var<T> w, b;
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, int cin, int cout, std::mt19937_64& rng,
         Init init = Init::kFanIn, bool bias = true);
  Var<T> operator()(const Var<T>& x) const { return b.defined() ? linear(x, w, b) : linear(x, w); }
};

template <typename T>
struct RMSNorm {
  Var<T> g;
  RMSNorm() = default;
  RMSNorm(ParamStore<T>& store, const std::string& name, int dim);
  Var<T> operator()(const Var<T>& x) const { return rmsnorm(x, g); }
};

/// linear -> SiLU -> linear with a 4x hidden width by default.
template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;
  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& name, int dim, int hidden, std::mt19937_64& rng,
              Init out_init = Init::kSmall);
  Var<T> operator()(const Var<T>& x) const { return fc2(silu(fc1(x))); }
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int kernel, int cin, int cout, int stride, int pad,
         std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

}  // namespace georecon::nn
