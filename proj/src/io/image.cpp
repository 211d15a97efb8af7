// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "georecon/io/binary.hpp"

namespace georecon::io {

void write_png(const std::string& path, const diffcore::Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw ShapeError("write_png: expected [H, W, 1|3], got " + diffcore::shape_str(image.shape()));
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = image.dim(2) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path + ": " + img.message);
  }
}

diffcore::Tensor<float> read_png(const std::string& path, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path + ": " + img.message);
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path + ": " + img.message);
  }
  diffcore::Tensor<float> out(diffcore::Shape{static_cast<int>(img.height), static_cast<int>(img.width), channels});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(bytes[i]) / 255.0f;
  return out;
}

void write_depth(const std::string& path, const diffcore::Tensor<float>& depth) {
  if (depth.rank() != 2) throw ShapeError("write_depth: expected [H, W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_magic(out, "DEPTHv01");
  write_u32(out, static_cast<std::uint32_t>(depth.dim(0)));
  write_u32(out, static_cast<std::uint32_t>(depth.dim(1)));
  write_f32_array(out, depth.data(), depth.size());
  if (!out) throw IoError("write failed: " + path);
}

diffcore::Tensor<float> read_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  expect_magic(in, "DEPTHv01", path);
  const auto h = read_u32(in, path);
  const auto w = read_u32(in, path);
  diffcore::Tensor<float> depth(diffcore::Shape{static_cast<int>(h), static_cast<int>(w)});
  read_f32_array(in, depth.data(), depth.size(), path);
  return depth;
}

}  // namespace georecon::io
