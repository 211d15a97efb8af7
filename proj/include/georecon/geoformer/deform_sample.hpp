// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "georecon/diffcore/autograd.hpp"

namespace georecon::geoformer {

using diffcore::Tensor;
using diffcore::Var;

/// Multi-level, multi-point deformable sampling for one view.
///
///   out[i, h*dh + c] = sum_{l,k} A[i,h,l,k] * F_l(base[i,l] + off[i,h,l,k])[h*dh + c]
///
/// values: per level [h_l, w_l, C]; base: [N, L, 2] feature-map coordinates
/// (x, y); offsets: [N, H, L, K, 2] in feature-map pixels; weights:
/// [N, H, L, K]. Rows with valid[i] == 0 produce zeros. Gradients flow to the
/// value maps, the offsets (sampling coordinates) and the weights.
template <typename T>
Var<T> deform_sample(const std::vector<Var<T>>& values, const Tensor<T>& base, const std::vector<std::uint8_t>& valid,
                     const Var<T>& offsets, const Var<T>& weights, int heads);

}  // namespace georecon::geoformer
