// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/geoformer/deform_sample.hpp"

#include <string>

#include "georecon/errors.hpp"

#include "georecon/diffcore/sampling.hpp"

namespace georecon::geoformer {

using diffcore::Node;
using diffcore::Shape;

template <typename T>
Var<T> deform_sample(const std::vector<Var<T>>& values, const Tensor<T>& base, const std::vector<std::uint8_t>& valid,
                     const Var<T>& offsets, const Var<T>& weights, int heads) {
  const int levels = static_cast<int>(values.size());
  if (levels == 0) throw ShapeError("deform_sample: no feature levels");
  const int c = values[0].dim(2);
  for (const auto& v : values) {
    if (v.shape().size() != 3 || v.dim(2) != c) throw ShapeError("deform_sample: value maps must be [h, w, C]");
  }
  if (heads < 1 || c % heads != 0) throw ShapeError("deform_sample: heads must divide the width");
  const int n = base.rank() == 3 ? base.dim(0) : -1;
  if (n < 0 || base.dim(1) != levels || base.dim(2) != 2) throw ShapeError("deform_sample: base must be [N, L, 2]");
  if (weights.shape().size() != 4 || weights.dim(0) != n || weights.dim(1) != heads || weights.dim(2) != levels) {
    throw ShapeError("deform_sample: weights must be [N, H, L, K], got " + diffcore::shape_str(weights.shape()));
  }
  const int k_points = weights.dim(3);
  if (offsets.shape() != Shape{n, heads, levels, k_points, 2}) {
    throw ShapeError("deform_sample: offsets must be [N, H, L, K, 2], got " + diffcore::shape_str(offsets.shape()));
  }
  if (valid.size() != static_cast<std::size_t>(n)) throw ShapeError("deform_sample: validity mask size mismatch");
  const int dh = c / heads;
  const auto cs = static_cast<std::size_t>(c);

  Tensor<T> out(Shape{n, c});
  const T* off = offsets.value().data();
  const T* A = weights.value().data();
  for (int i = 0; i < n; ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    T* dst = out.data() + static_cast<std::size_t>(i) * cs;
    for (int h = 0; h < heads; ++h) {
      for (int l = 0; l < levels; ++l) {
        const auto& map = values[static_cast<std::size_t>(l)].value();
        const int mh = map.dim(0), mw = map.dim(1);
        const T bx = base[(static_cast<std::size_t>(i) * levels + l) * 2];
        const T by = base[(static_cast<std::size_t>(i) * levels + l) * 2 + 1];
        for (int k = 0; k < k_points; ++k) {
          const std::size_t ai = ((static_cast<std::size_t>(i) * heads + h) * levels + l) * k_points + k;
          const auto t = diffcore::bilinear_taps(bx + off[2 * ai], by + off[2 * ai + 1], mh, mw);
          const T a = A[ai];
          const T w00 = a * static_cast<T>(t.w00()), w01 = a * static_cast<T>(t.w01());
          const T w10 = a * static_cast<T>(t.w10()), w11 = a * static_cast<T>(t.w11());
          const T* f00 = map.data() + t.o00 * cs + h * dh;
          const T* f01 = map.data() + t.o01 * cs + h * dh;
          const T* f10 = map.data() + t.o10 * cs + h * dh;
          const T* f11 = map.data() + t.o11 * cs + h * dh;
          T* d = dst + h * dh;
          for (int ch = 0; ch < dh; ++ch) d[ch] += w00 * f00[ch] + w01 * f01[ch] + w10 * f10[ch] + w11 * f11[ch];
        }
      }
    }
  }

  std::vector<Var<T>> parents(values.begin(), values.end());
  parents.push_back(offsets);
  parents.push_back(weights);
  return diffcore::make_result<T>("deform_sample", std::move(out), std::move(parents),
                        [base, valid, levels, heads, k_points, n, dh, cs](Node<T>& nd) {
    auto& poff = *nd.parents[static_cast<std::size_t>(levels)];
    auto& pA = *nd.parents[static_cast<std::size_t>(levels) + 1];
    const T* off = poff.value.data();
    const T* A = pA.value.data();
    T* goff = poff.requires_grad ? poff.grad_buffer().data() : nullptr;
    T* gA = pA.requires_grad ? pA.grad_buffer().data() : nullptr;
    std::vector<T*> gmaps(static_cast<std::size_t>(levels), nullptr);
    for (int l = 0; l < levels; ++l) {
      auto& pm = *nd.parents[static_cast<std::size_t>(l)];
      if (pm.requires_grad) gmaps[static_cast<std::size_t>(l)] = pm.grad_buffer().data();
    }
    for (int i = 0; i < n; ++i) {
      if (!valid[static_cast<std::size_t>(i)]) continue;
      const T* g = nd.grad.data() + static_cast<std::size_t>(i) * cs;
      for (int h = 0; h < heads; ++h) {
        const T* gh = g + h * dh;
        for (int l = 0; l < levels; ++l) {
          const auto& map = nd.parents[static_cast<std::size_t>(l)]->value;
          const int mh = map.dim(0), mw = map.dim(1);
          T* gm = gmaps[static_cast<std::size_t>(l)];
          const T bx = base[(static_cast<std::size_t>(i) * levels + l) * 2];
          const T by = base[(static_cast<std::size_t>(i) * levels + l) * 2 + 1];
          for (int k = 0; k < k_points; ++k) {
            const std::size_t ai = ((static_cast<std::size_t>(i) * heads + h) * levels + l) * k_points + k;
            const auto t = diffcore::bilinear_taps(bx + off[2 * ai], by + off[2 * ai + 1], mh, mw);
            const T a = A[ai];
            const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
            const T* f00 = map.data() + t.o00 * cs + h * dh;
            const T* f01 = map.data() + t.o01 * cs + h * dh;
            const T* f10 = map.data() + t.o10 * cs + h * dh;
            const T* f11 = map.data() + t.o11 * cs + h * dh;
            T sample_dot = 0, dx = 0, dy = 0;
            for (int ch = 0; ch < dh; ++ch) {
              const T v00 = f00[ch], v01 = f01[ch], v10 = f10[ch], v11 = f11[ch];
              const T s = (T(1) - fx) * (T(1) - fy) * v00 + fx * (T(1) - fy) * v01 + (T(1) - fx) * fy * v10 +
                          fx * fy * v11;
              sample_dot += gh[ch] * s;
              dx += gh[ch] * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
              dy += gh[ch] * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
            }
            if (gA) gA[ai] += sample_dot;
            if (goff) {
              if (!t.clamp_x) goff[2 * ai] += a * dx;
              if (!t.clamp_y) goff[2 * ai + 1] += a * dy;
            }
            if (gm) {
              const T w00 = a * static_cast<T>(t.w00()), w01 = a * static_cast<T>(t.w01());
              const T w10 = a * static_cast<T>(t.w10()), w11 = a * static_cast<T>(t.w11());
              T* g00 = gm + t.o00 * cs + h * dh;
              T* g01 = gm + t.o01 * cs + h * dh;
              T* g10 = gm + t.o10 * cs + h * dh;
              T* g11 = gm + t.o11 * cs + h * dh;
              for (int ch = 0; ch < dh; ++ch) {
                g00[ch] += w00 * gh[ch];
                g01[ch] += w01 * gh[ch];
                g10[ch] += w10 * gh[ch];
                g11[ch] += w11 * gh[ch];
              }
            }
          }
        }
      }
    }
  });
}

template Var<float> deform_sample<float>(const std::vector<Var<float>>&, const Tensor<float>&,
                                         const std::vector<std::uint8_t>&, const Var<float>&, const Var<float>&, int);
template Var<double> deform_sample<double>(const std::vector<Var<double>>&, const Tensor<double>&,
                                           const std::vector<std::uint8_t>&, const Var<double>&, const Var<double>&,
                                           int);

}  // namespace georecon::geoformer
