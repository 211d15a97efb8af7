// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "georecon/diffcore/ops.hpp"
#include "georecon/errors.hpp"

namespace georecon::losses {

using namespace diffcore;

namespace {

struct ProxyLevel {
  int cin, cout, stride;
};
constexpr ProxyLevel kProxyLevels[3] = {{3, 16, 1}, {16, 32, 2}, {32, 32, 2}};

template <typename T>
Tensor<T> cast_tensor(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

template <typename T>
void require_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

template <typename T>
PerceptualProxy<T>::PerceptualProxy(std::uint64_t seed) : seed_(seed) {
  std::mt19937_64 rng(seed);
  for (const auto& l : kProxyLevels) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (9.0 * l.cin)));
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    Tensor<T> w(Shape{3, 3, l.cin, l.cout}), b(Shape{l.cout});
    for (auto& v : w.vec()) v = static_cast<T>(n(rng));
    for (auto& v : b.vec()) v = static_cast<T>(u(rng));
    // rmsnorm with gain 1/sqrt(C) gives unit-length feature vectors.
    Tensor<T> g = Tensor<T>::full(Shape{l.cout}, static_cast<T>(1.0 / std::sqrt(static_cast<double>(l.cout))));
    levels_.push_back({Var<T>::constant(std::move(w)), Var<T>::constant(std::move(b)), Var<T>::constant(std::move(g))});
  }
}

template <typename T>
Var<T> PerceptualProxy<T>::operator()(const Var<T>& a, const Var<T>& b) const {
  require_shape<T>(a.shape(), b.shape(), "perceptual_proxy");
  if (a.shape().size() != 3 || a.dim(2) != 3) throw ShapeError("perceptual_proxy: images must be [H, W, 3]");
  Var<T> fa = a, fb = b;
  Var<T> total;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const auto& l = levels_[i];
    if (i > 0) {
      fa = silu(fa);
      fb = silu(fb);
    }
    fa = conv2d(fa, l.w, l.b, kProxyLevels[i].stride, 1);
    fb = conv2d(fb, l.w, l.b, kProxyLevels[i].stride, 1);
    auto d = mse(rmsnorm(fa, l.g), rmsnorm(fb, l.g));
    total = total.defined() ? add(total, d) : d;
  }
  return total;
}

template <typename T>
ImageLoss<T> image_loss(const Var<T>& pred, const Tensor<T>& target, const PerceptualProxy<T>& proxy) {
  require_shape<T>(pred.shape(), target.shape(), "image_loss");
  auto t = Var<T>::constant(target);
  return {mse(pred, t), scale(proxy(pred, t), static_cast<T>(kPerceptualWeight))};
}

template <typename T>
Var<T> mask_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_shape<T>(pred.shape(), target.shape(), "mask_loss");
  return mse(pred, Var<T>::constant(target));
}

template <typename T>
Tensor<T> image_gradient_magnitude(const Tensor<T>& image) {
  if (image.rank() != 3) throw ShapeError("image gradient: expected [H, W, C]");
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor<T> out(Shape{h, w});
  auto at = [&](int y, int x, int k) {
    return static_cast<double>(image[(static_cast<std::size_t>(y) * w + x) * c + k]);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int k = 0; k < c; ++k) {
        if (x + 1 < w) s += std::abs(at(y, x + 1, k) - at(y, x, k));
        if (y + 1 < h) s += std::abs(at(y + 1, x, k) - at(y, x, k));
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<T>(s / c);
    }
  }
  return out;
}

template <typename T>
Var<T> depth_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& image) {
  require_shape<T>(pred.shape(), target.shape(), "depth_loss");
  if (pred.shape().size() != 2 || image.rank() != 3 || image.dim(0) != pred.dim(0) || image.dim(1) != pred.dim(1)) {
    throw ShapeError("depth_loss: depth maps must be [H, W] matching the image");
  }
  const auto grad_mag = image_gradient_magnitude(image);
  const std::size_t n = target.size();
  std::vector<double> weight(n, 0.0);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(target[i] > 0)) continue;
    weight[i] = std::exp(-static_cast<double>(grad_mag[i])) / static_cast<double>(n);
    loss += weight[i] * std::log1p(std::abs(static_cast<double>(pred.value()[i]) - target[i]));
  }
  return make_result<T>("depth_loss", Tensor<T>::scalar(static_cast<T>(loss)), {pred},
                        [weight, target](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_buffer();
    const double up = nd.grad[0];
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (weight[i] == 0.0) continue;
      const double d = static_cast<double>(nd.parents[0]->value[i]) - target[i];
      if (d == 0.0) continue;
      g[i] += static_cast<T>(up * weight[i] * (d > 0 ? 1.0 : -1.0) / (1.0 + std::abs(d)));
    }
  });
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  img_l2 += o.img_l2;
  img_perc += o.img_perc;
  mask += o.mask;
  depth += o.depth;
  return *this;
}

bool LossBreakdown::consistent(double tol) const {
  const double sum = img_l2 + img_perc + mask + kDepthWeight * depth;
  return std::abs(total - sum) <= tol * std::max(1.0, std::abs(total));
}

template <typename T>
ViewLoss<T> view_loss(const gsplat::RenderOut<T>& render, const scenegen::ViewBundle& target,
                      const PerceptualProxy<T>& proxy) {
  const auto rgb = cast_tensor<T>(target.rgb);
  const auto mask = cast_tensor<T>(target.mask);
  const auto depth = cast_tensor<T>(target.depth);
  auto img = image_loss(render.image, rgb, proxy);
  auto m = mask_loss(render.alpha, mask);
  auto d = depth_loss(render.depth, depth, rgb);
  ViewLoss<T> out;
  out.total = add(add(add(img.l2, img.perc), m), scale(d, static_cast<T>(kDepthWeight)));
  out.parts.img_l2 = img.l2.value().item();
  out.parts.img_perc = img.perc.value().item();
  out.parts.mask = m.value().item();
  out.parts.depth = d.value().item();
  out.parts.total = out.total.value().item();
  return out;
}

template class PerceptualProxy<float>;
template class PerceptualProxy<double>;
template ImageLoss<float> image_loss<float>(const Var<float>&, const Tensor<float>&, const PerceptualProxy<float>&);
template ImageLoss<double> image_loss<double>(const Var<double>&, const Tensor<double>&,
                                              const PerceptualProxy<double>&);
template Var<float> mask_loss<float>(const Var<float>&, const Tensor<float>&);
template Var<double> mask_loss<double>(const Var<double>&, const Tensor<double>&);
template Tensor<float> image_gradient_magnitude<float>(const Tensor<float>&);
template Tensor<double> image_gradient_magnitude<double>(const Tensor<double>&);
template Var<float> depth_loss<float>(const Var<float>&, const Tensor<float>&, const Tensor<float>&);
template Var<double> depth_loss<double>(const Var<double>&, const Tensor<double>&, const Tensor<double>&);
template ViewLoss<float> view_loss<float>(const gsplat::RenderOut<float>&, const scenegen::ViewBundle&,
                                          const PerceptualProxy<float>&);
template ViewLoss<double> view_loss<double>(const gsplat::RenderOut<double>&, const scenegen::ViewBundle&,
                                            const PerceptualProxy<double>&);

}  // namespace georecon::losses
