// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "georecon/diffcore/autograd.hpp"
#include "georecon/diffcore/tensor.hpp"

// Differentiable primitives. Every op validates shapes (ShapeError), checks
// its output for NaN/Inf (NumericError) and records a backward closure when a
// parent requires a gradient.
namespace georecon::diffcore {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

template <typename T> Var<T> silu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> softmax(const Var<T>& x, int axis = -1);

/// Softmax over the last axis restricted to entries with mask != 0. Rows with
/// no valid entry produce all zeros.
template <typename T> Var<T> masked_softmax(const Var<T>& x, const Tensor<T>& mask);

inline constexpr double kRmsNormEps = 1e-6;

/// x / sqrt(mean(x^2) + eps) * g over the last axis.
template <typename T> Var<T> rmsnorm(const Var<T>& x, const Var<T>& g, T eps = T(kRmsNormEps));

/// y = x W + b for x [..., Cin], W [Cin, Cout], b [Cout].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w);

template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, int axis = -1);
template <typename T> Var<T> slice(const Var<T>& x, int axis, int start, int length);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

/// Repeats a [C] vector into [n, C].
template <typename T> Var<T> broadcast_rows(const Var<T>& v, int n);

/// out = sum_v w[:, v] * xs[v], w [N, V], each xs[v] [N, C].
template <typename T> Var<T> weighted_sum(const Var<T>& w, const std::vector<Var<T>>& xs);

/// mean((a - b)^2) over all entries.
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

/// 2D convolution on HWC images; weights [kh, kw, Cin, Cout], bias [Cout].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// Bilinear lookup of F [H, W, C] at points p [P, 2] (p = (x, y) = (column,
/// row)); texel (r, c) has its center at (c, r). Coordinates outside the map
/// clamp to the border. Gradients flow to both F and p.
template <typename T> Var<T> bilinear_sample(const Var<T>& feature, const Var<T>& points);

/// Multi-head scaled dot-product attention. q [Nq, C], k and v [Nk, C].
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads);

/// Rotary embedding over 3D positions. Inside every head of width head_dim
/// the channels split into three groups (x, y, z); each group is rotated
/// pairwise with position coords[:, axis] * position_scale.
template <typename T>
Var<T> rope3d(const Var<T>& x, const Tensor<T>& coords, int head_dim, T position_scale = T(128),
              T theta = T(10000));

}  // namespace georecon::diffcore
