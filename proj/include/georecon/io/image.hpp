// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "georecon/diffcore/tensor.hpp"

namespace georecon::io {

/// Writes an [H, W, C] image (C = 1 or 3, values in [0, 1]) as 8-bit PNG.
void write_png(const std::string& path, const diffcore::Tensor<float>& image);

/// Reads an 8-bit PNG as [H, W, channels] with values in [0, 1]. channels is
/// 1 (gray) or 3 (RGB).
diffcore::Tensor<float> read_png(const std::string& path, int channels);

/// Depth map: "DEPTHv01", H and W as u32 LE, then H*W float32.
void write_depth(const std::string& path, const diffcore::Tensor<float>& depth);
diffcore::Tensor<float> read_depth(const std::string& path);

}  // namespace georecon::io
