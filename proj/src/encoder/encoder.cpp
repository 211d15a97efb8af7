// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/encoder/encoder.hpp"

#include <cmath>
#include <fstream>

#include "georecon/io/binary.hpp"

namespace georecon::encoder {

using namespace diffcore;

template <typename T>
Tensor<T> position_table_2d(int h, int w, int channels) {
  Tensor<T> table(Shape{h * w, channels});
  const int half = channels / 2;
  const int pairs = half / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T* row = table.data() + static_cast<std::size_t>(y * w + x) * channels;
      for (int i = 0; i < pairs; ++i) {
        const double f = std::pow(10000.0, -static_cast<double>(i) / std::max(pairs, 1));
        row[2 * i] = static_cast<T>(std::sin(y * f));
        row[2 * i + 1] = static_cast<T>(std::cos(y * f));
        row[half + 2 * i] = static_cast<T>(std::sin(x * f));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(x * f));
      }
    }
  }
  return table;
}

template <typename T>
TransformerBackbone<T>::TransformerBackbone(ParamStore<T>& store, const std::string& prefix,
                                            const EncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const int c = cfg.width;
  patch_ = nn::Conv2d<T>(store, prefix + ".patch", cfg.patch_high, 3, c, cfg.patch_high, 0, rng);
  for (int l = 0; l < cfg.high_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.norm1 = nn::RMSNorm<T>(store, p + ".norm1", c);
    layer.qkv = nn::Linear<T>(store, p + ".qkv", c, 3 * c, rng);
    layer.out = nn::Linear<T>(store, p + ".out", c, c, rng, nn::Init::kSmall);
    layer.norm2 = nn::RMSNorm<T>(store, p + ".norm2", c);
    layer.ffn = nn::FeedForward<T>(store, p + ".ffn", c, 4 * c, rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = nn::RMSNorm<T>(store, prefix + ".final_norm", c);
}

template <typename T>
Var<T> TransformerBackbone<T>::encode(const Tensor<T>& image, int) const {
  const int p = cfg_.patch_high;
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("encode_high: image must be [H, W, 3]");
  if (image.dim(0) % p != 0 || image.dim(1) % p != 0) {
    throw ShapeError("encode_high: resolution " + diffcore::shape_str(image.shape()) +
                     " not divisible by patch size " + std::to_string(p));
  }
  const int h = image.dim(0) / p, w = image.dim(1) / p, c = cfg_.width;
  Var<T> x = reshape(patch_(Var<T>::constant(image)), {h * w, c});
  x = add(x, Var<T>::constant(position_table_2d<T>(h, w, c)));
  for (const auto& layer : layers_) {
    Var<T> qkv = layer.qkv(layer.norm1(x));
    Var<T> a = attention(slice(qkv, 1, 0, c), slice(qkv, 1, c, c), slice(qkv, 1, 2 * c, c), cfg_.high_heads);
    x = add(x, layer.out(a));
    x = add(x, layer.ffn(layer.norm2(x)));
  }
  return reshape(final_norm_(x), {h, w, c});
}

template <typename T>
ExternalBackbone<T>::ExternalBackbone(ParamStore<T>& store, const std::string& prefix, Tensor<float> features,
                                      int width, std::mt19937_64& rng)
    : features_(std::move(features)) {
  if (features_.rank() != 4) throw ShapeError("external features must be [n_views, h, w, c]");
  proj_ = nn::Linear<T>(store, prefix + ".proj", features_.dim(3), width, rng);
}

template <typename T>
Var<T> ExternalBackbone<T>::encode(const Tensor<T>&, int view_index) const {
  if (view_index < 0 || view_index >= features_.dim(0)) {
    throw ShapeError("external features: no entry for view " + std::to_string(view_index));
  }
  const int h = features_.dim(1), w = features_.dim(2), c = features_.dim(3);
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  Tensor<T> slab(Shape{h, w, c});
  const float* src = features_.data() + static_cast<std::size_t>(view_index) * n;
  for (std::size_t i = 0; i < n; ++i) slab[i] = static_cast<T>(src[i]);
  return proj_(Var<T>::constant(std::move(slab)));
}

template <typename T>
ImageEncoder<T>::ImageEncoder(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& cfg,
                              std::mt19937_64& rng)
    : cfg_(cfg) {
  if (!cfg.use_high && !cfg.use_low) throw ShapeError("encoder: at least one feature level is required");
  if (cfg.stride_low < 2 || (cfg.stride_low & (cfg.stride_low - 1)) != 0) {
    throw ShapeError("encoder: stride_low must be a power of two >= 2");
  }
  if (cfg.use_low) {
    int stages = 0;
    for (int s = cfg.stride_low; s > 1; s /= 2) ++stages;
    int cin = cfg.use_rays ? 9 : 3;
    for (int i = 0; i < stages; ++i) {
      const int cout = i + 1 == stages ? cfg.width : std::max(cfg.width / 2, 8);
      low_.emplace_back(store, prefix + ".low" + std::to_string(i), 3, cin, cout, 2, 1, rng);
      cin = cout;
    }
  }
  if (cfg.use_high) high_ = std::make_shared<TransformerBackbone<T>>(store, prefix + ".high", cfg, rng);
}

template <typename T>
Var<T> ImageEncoder<T>::encode_low(const Tensor<T>& image, const Tensor<T>& rays) const {
  if (low_.empty()) throw ShapeError("encode_low: low-level features are disabled");
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("encode_low: image must be [H, W, 3]");
  if (image.dim(0) % cfg_.stride_low != 0 || image.dim(1) % cfg_.stride_low != 0) {
    throw ShapeError("encode_low: resolution not divisible by the low-level stride");
  }
  Var<T> x = Var<T>::constant(image);
  if (cfg_.use_rays) {
    if (rays.rank() != 3 || rays.dim(0) != image.dim(0) || rays.dim(1) != image.dim(1) || rays.dim(2) != 6) {
      throw ShapeError("encode_low: rays " + diffcore::shape_str(rays.shape()) + " do not match image " +
                       diffcore::shape_str(image.shape()));
    }
    x = concat<T>({x, Var<T>::constant(rays)}, 2);
  }
  for (std::size_t i = 0; i < low_.size(); ++i) {
    x = low_[i](x);
    if (i + 1 < low_.size()) x = silu(x);
  }
  return x;
}

template <typename T>
Var<T> ImageEncoder<T>::encode_high(const Tensor<T>& image, int view_index) const {
  if (!high_) throw ShapeError("encode_high: high-level features are disabled");
  return high_->encode(image, view_index);
}

template <typename T>
FeaturePyramid<T> ImageEncoder<T>::encode(const Tensor<T>& image, const geometry::CameraPose& pose,
                                          int view_index) const {
  FeaturePyramid<T> pyr;
  pyr.view_index = view_index;
  if (high_) {
    Var<T> f = encode_high(image, view_index);
    if (image.dim(0) % f.dim(0) != 0 || image.dim(0) / f.dim(0) != image.dim(1) / f.dim(1)) {
      throw ShapeError("high-level map does not evenly divide the image");
    }
    pyr.levels.push_back({f, image.dim(0) / f.dim(0)});
  }
  if (!low_.empty()) {
    const Tensor<T> rays = cfg_.use_rays ? geometry::plucker_rays<T>(pose) : Tensor<T>();
    pyr.levels.push_back({encode_low(image, rays), cfg_.stride_low});
  }
  return pyr;
}

void write_feature_file(const std::string& path, const Tensor<float>& features) {
  if (features.rank() != 4) throw ShapeError("feature file payload must be [n_views, h, w, c]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  io::write_magic(out, "FEATv001");
  for (int a = 0; a < 4; ++a) io::write_u32(out, static_cast<std::uint32_t>(features.dim(a)));
  io::write_f32_array(out, features.data(), features.size());
  if (!out) throw IoError("write failed: " + path);
}

Tensor<float> read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  io::expect_magic(in, "FEATv001", path);
  Shape shape(4);
  for (auto& d : shape) d = static_cast<int>(io::read_u32(in, path));
  Tensor<float> t(shape);
  io::read_f32_array(in, t.data(), t.size(), path);
  return t;
}

template Tensor<float> position_table_2d<float>(int, int, int);
template Tensor<double> position_table_2d<double>(int, int, int);
template class TransformerBackbone<float>;
template class TransformerBackbone<double>;
template class ExternalBackbone<float>;
template class ExternalBackbone<double>;
template class ImageEncoder<float>;
template class ImageEncoder<double>;

}  // namespace georecon::encoder
