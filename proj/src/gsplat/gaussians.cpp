// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/gsplat/gaussians.hpp"

#include <cmath>
#include <fstream>

#include "georecon/errors.hpp"
#include "georecon/io/binary.hpp"

namespace georecon::gsplat {

using namespace diffcore;

namespace {

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

constexpr double kQuatFloor = 1e-12;

}  // namespace

template <typename T>
void GaussianSet<T>::validate() const {
  if (!params.defined()) return;
  if (params.shape().size() != 2 || params.dim(1) != kGaussianDim) throw ShapeError("Gaussian set must be [G, 14]");
  const auto& v = params.value();
  for (int g = 0; g < size(); ++g) {
    const T* row = v.data() + static_cast<std::size_t>(g) * kGaussianDim;
    for (int k = 0; k < kGaussianDim; ++k) {
      if (!std::isfinite(static_cast<double>(row[k]))) throw NumericError("non-finite Gaussian parameter");
    }
    for (int k = 0; k < 3; ++k) {
      if (row[kColor + k] < 0 || row[kColor + k] > 1) throw NumericError("Gaussian color outside [0, 1]");
      if (!(row[kScale + k] > 0)) throw NumericError("Gaussian scale must be positive");
    }
    if (!(row[kOpacity] > 0 && row[kOpacity] < 1)) throw NumericError("Gaussian opacity outside (0, 1)");
    double n = 0;
    for (int k = 0; k < 4; ++k) n += static_cast<double>(row[kRotation + k]) * row[kRotation + k];
    if (std::abs(std::sqrt(n) - 1.0) > 1e-5) throw NumericError("Gaussian rotation is not a unit quaternion");
  }
}

template <typename T>
GaussianSet<T> empty_gaussians() {
  return GaussianSet<T>{Var<T>::constant(Tensor<T>(Shape{0, kGaussianDim}))};
}

template <typename T>
Var<T> activate_gaussians(const Var<T>& raw, const Tensor<T>& anchors, T o_max, T s_max) {
  if (raw.shape().size() != 2 || raw.dim(1) != kGaussianDim) throw ShapeError("activate_gaussians: raw must be [G, 14]");
  const int g = raw.dim(0);
  if (anchors.shape() != Shape{g, 3}) throw ShapeError("activate_gaussians: anchors must be [G, 3]");
  Tensor<T> out(Shape{g, kGaussianDim});
  const auto& r = raw.value();
  const double om = o_max, sm = s_max;
  for (int i = 0; i < g; ++i) {
    const T* x = r.data() + static_cast<std::size_t>(i) * kGaussianDim;
    T* y = out.data() + static_cast<std::size_t>(i) * kGaussianDim;
    for (int k = 0; k < 3; ++k) {
      y[kCenter + k] = static_cast<T>(anchors[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(k)] - 0.5 * om +
                                      om * sigmoid(x[kCenter + k]));
      y[kColor + k] = static_cast<T>(sigmoid(x[kColor + k]));
      y[kScale + k] = static_cast<T>(sm * sigmoid(x[kScale + k]));
    }
    double u[4] = {1.0 + x[kRotation], x[kRotation + 1], x[kRotation + 2], x[kRotation + 3]};
    const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]);
    for (int k = 0; k < 4; ++k) y[kRotation + k] = static_cast<T>(n > kQuatFloor ? u[k] / n : (k == 0 ? 1.0 : 0.0));
    y[kOpacity] = static_cast<T>(sigmoid(x[kOpacity]));
  }
  return make_result<T>("activate_gaussians", std::move(out), {raw}, [g, om, sm](Node<T>& nd) {
    auto& gr = nd.parents[0]->grad_buffer();
    const auto& r = nd.parents[0]->value;
    for (int i = 0; i < g; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * kGaussianDim;
      const T* x = r.data() + o;
      const T* gy = nd.grad.data() + o;
      T* gx = gr.data() + o;
      auto dsig = [](double v) {
        const double s = sigmoid(v);
        return s * (1.0 - s);
      };
      for (int k = 0; k < 3; ++k) {
        gx[kCenter + k] += static_cast<T>(gy[kCenter + k] * om * dsig(x[kCenter + k]));
        gx[kColor + k] += static_cast<T>(gy[kColor + k] * dsig(x[kColor + k]));
        gx[kScale + k] += static_cast<T>(gy[kScale + k] * sm * dsig(x[kScale + k]));
      }
      gx[kOpacity] += static_cast<T>(gy[kOpacity] * dsig(x[kOpacity]));
      double u[4] = {1.0 + x[kRotation], x[kRotation + 1], x[kRotation + 2], x[kRotation + 3]};
      const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]);
      if (n <= kQuatFloor) continue;
      double dot = 0;
      for (int k = 0; k < 4; ++k) dot += (u[k] / n) * gy[kRotation + k];
      for (int k = 0; k < 4; ++k) gx[kRotation + k] += static_cast<T>((gy[kRotation + k] - (u[k] / n) * dot) / n);
    }
  });
}

template <typename T>
GaussianHead<T>::GaussianHead(ParamStore<T>& store, const std::string& prefix, const DecodeConfig& cfg,
                              std::mt19937_64& rng)
    : cfg_(cfg),
      fc1_(store, prefix + ".fc1", cfg.width, cfg.hidden, rng),
      fc2_(store, prefix + ".fc2", cfg.hidden, cfg.hidden, rng),
      out_(store, prefix + ".out", cfg.hidden, cfg.per_token * kGaussianDim, rng, nn::Init::kSmall) {
  if (cfg.per_token < 1 || cfg.hidden < 1 || !(cfg.voxel > 0)) throw ShapeError("GaussianHead: bad config");
}

template <typename T>
Var<T> GaussianHead<T>::raw(const Var<T>& tokens) const {
  const int n = tokens.dim(0);
  return reshape(out_(silu(fc2_(silu(fc1_(tokens))))), Shape{n * cfg_.per_token, kGaussianDim});
}

template <typename T>
GaussianSet<T> GaussianHead<T>::operator()(const Var<T>& tokens, const Tensor<T>& anchors) const {
  const int n = tokens.dim(0);
  if (anchors.shape() != Shape{n, 3}) throw ShapeError("GaussianHead: anchors must be [N, 3]");
  if (n == 0) return empty_gaussians<T>();
  Tensor<T> per(Shape{n * cfg_.per_token, 3});
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < cfg_.per_token; ++m) {
      for (int a = 0; a < 3; ++a) {
        per[(static_cast<std::size_t>(i) * cfg_.per_token + m) * 3 + a] = anchors[static_cast<std::size_t>(i) * 3 + a];
      }
    }
  }
  return GaussianSet<T>{activate_gaussians(raw(tokens), per, static_cast<T>(cfg_.o_max()), static_cast<T>(cfg_.s_max()))};
}

void write_gaussians(const std::string& path, const Tensor<float>& params) {
  if (params.rank() != 2 || params.dim(1) != kGaussianDim) throw ShapeError("write_gaussians: expected [G, 14]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  io::write_magic(out, "3DGSv001");
  io::write_u32(out, static_cast<std::uint32_t>(params.dim(0)));
  io::write_f32_array(out, params.data(), params.size());
  if (!out) throw IoError("write failed: " + path);
}

Tensor<float> read_gaussians(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  io::expect_magic(in, "3DGSv001", path);
  const auto n = io::read_u32(in, path);
  if (n > (1u << 28)) throw IoError(path + ": implausible Gaussian count");
  Tensor<float> params(Shape{static_cast<int>(n), kGaussianDim});
  io::read_f32_array(in, params.data(), params.size(), path);
  return params;
}

template struct GaussianSet<float>;
template struct GaussianSet<double>;
template GaussianSet<float> empty_gaussians<float>();
template GaussianSet<double> empty_gaussians<double>();
template Var<float> activate_gaussians<float>(const Var<float>&, const Tensor<float>&, float, float);
template Var<double> activate_gaussians<double>(const Var<double>&, const Tensor<double>&, double, double);
template class GaussianHead<float>;
template class GaussianHead<double>;

}  // namespace georecon::gsplat
