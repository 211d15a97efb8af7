// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/gsplat/render.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "georecon/diffcore/ops.hpp"
#include "georecon/errors.hpp"

namespace georecon::gsplat {

using namespace diffcore;

namespace {

using Deriv = Eigen::Matrix<double, 10, 1>;  // d / d (center 3, scale 3, quaternion 4)
using AD = Eigen::AutoDiffScalar<Deriv>;

constexpr double kMinAlpha = 1e-6;  // depth normalization floor

// Screen-space footprint of one Gaussian.
struct Splat {
  int row = 0;                        // Gaussian index in the input
  double z = 0, opacity = 0;
  double mx = 0, my = 0;              // 2D mean, pixels
  double ca = 0, cb = 0, cc = 0;      // inverse 2D covariance [[a, b], [b, c]]
  double qmax = 0;                    // footprint ends where the Mahalanobis term exceeds this
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  Eigen::Matrix<double, 6, 10> jac;   // d (mx, my, a, b, c, z) / d (center, scale, quat)
};

// Projects center / scale / quaternion to the 2D mean, conic and camera z.
template <typename S>
void project_gaussian(const S* mu, const S* scale, const S* quat, const geometry::CameraPose& pose, double low_pass,
                      S out[6], double cov2[3]) {
  using std::sqrt;
  const auto& R = pose.T.R;
  const auto& t = pose.T.t;
  S rel[3] = {mu[0] - t.x(), mu[1] - t.y(), mu[2] - t.z()};
  S pc[3];
  for (int i = 0; i < 3; ++i) pc[i] = R(0, i) * rel[0] + R(1, i) * rel[1] + R(2, i) * rel[2];

  const S n = sqrt(quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3]);
  const S w = quat[0] / n, x = quat[1] / n, y = quat[2] / n, z = quat[3] / n;
  const S rq[3][3] = {{1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)},
                      {2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)},
                      {2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)}};
  // Camera-frame factor B = R^T Rq diag(s), covariance B B^T.
  S b[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      S acc = R(0, i) * rq[0][j] + R(1, i) * rq[1][j] + R(2, i) * rq[2][j];
      b[i][j] = acc * scale[j];
    }
  }
  const double fx = pose.K.fx, fy = pose.K.fy;
  const S iz = 1.0 / pc[2];
  // Rows of J B.
  S jb[2][3];
  for (int j = 0; j < 3; ++j) {
    jb[0][j] = fx * iz * (b[0][j] - pc[0] * iz * b[2][j]);
    jb[1][j] = fy * iz * (b[1][j] - pc[1] * iz * b[2][j]);
  }
  const S s00 = jb[0][0] * jb[0][0] + jb[0][1] * jb[0][1] + jb[0][2] * jb[0][2] + low_pass;
  const S s01 = jb[0][0] * jb[1][0] + jb[0][1] * jb[1][1] + jb[0][2] * jb[1][2];
  const S s11 = jb[1][0] * jb[1][0] + jb[1][1] * jb[1][1] + jb[1][2] * jb[1][2] + low_pass;
  const S det = s00 * s11 - s01 * s01;
  out[0] = fx * pc[0] * iz + pose.K.cx;
  out[1] = fy * pc[1] * iz + pose.K.cy;
  out[2] = s11 / det;
  out[3] = -s01 / det;
  out[4] = s00 / det;
  out[5] = pc[2];
  if constexpr (std::is_same_v<S, double>) {
    cov2[0] = s00;
    cov2[1] = s01;
    cov2[2] = s11;
  } else {
    cov2[0] = s00.value();
    cov2[1] = s01.value();
    cov2[2] = s11.value();
  }
}

template <typename T>
std::vector<Splat> build_splats(const Tensor<T>& params, const geometry::CameraPose& pose, const RenderOptions& opt,
                                bool with_jacobian) {
  const int g = params.dim(0);
  const int width = pose.K.width, height = pose.K.height;
  std::vector<Splat> splats;
  splats.reserve(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) {
    const T* row = params.data() + static_cast<std::size_t>(i) * kGaussianDim;
    const double opacity = row[kOpacity];
    if (!(opacity > opt.min_weight)) continue;
    // Cheap depth test before the full projection.
    const geometry::Vec3 mu(row[kCenter], row[kCenter + 1], row[kCenter + 2]);
    const double zc = pose.T.R.col(2).dot(mu - pose.T.t);
    if (!(zc > opt.near)) continue;

    Splat s;
    s.row = i;
    s.opacity = opacity;
    double cov2[3];
    if (with_jacobian) {
      AD mu_ad[3], sc_ad[3], q_ad[4];
      for (int k = 0; k < 3; ++k) {
        mu_ad[k] = AD(row[kCenter + k], 10, k);
        sc_ad[k] = AD(row[kScale + k], 10, 3 + k);
      }
      for (int k = 0; k < 4; ++k) q_ad[k] = AD(row[kRotation + k], 10, 6 + k);
      AD out[6];
      project_gaussian(mu_ad, sc_ad, q_ad, pose, opt.low_pass, out, cov2);
      for (int r = 0; r < 6; ++r) s.jac.row(r) = out[r].derivatives().transpose();
      s.mx = out[0].value();
      s.my = out[1].value();
      s.ca = out[2].value();
      s.cb = out[3].value();
      s.cc = out[4].value();
      s.z = out[5].value();
    } else {
      double mu_d[3], sc_d[3], q_d[4], out[6];
      for (int k = 0; k < 3; ++k) {
        mu_d[k] = row[kCenter + k];
        sc_d[k] = row[kScale + k];
      }
      for (int k = 0; k < 4; ++k) q_d[k] = row[kRotation + k];
      project_gaussian(mu_d, sc_d, q_d, pose, opt.low_pass, out, cov2);
      s.mx = out[0];
      s.my = out[1];
      s.ca = out[2];
      s.cb = out[3];
      s.cc = out[4];
      s.z = out[5];
    }
    const double half_tr = 0.5 * (cov2[0] + cov2[2]);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (cov2[0] - cov2[2]) * (cov2[0] - cov2[2]) + cov2[1] * cov2[1]));
    const double lmax = half_tr + disc, lmin = half_tr - disc;
    if (!(lmin > 0) || lmax / lmin > opt.max_condition || !std::isfinite(s.mx) || !std::isfinite(s.my)) continue;
    s.qmax = 2.0 * std::log(opacity / opt.min_weight);
    const double r = std::sqrt(s.qmax * lmax);
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.mx - r)));
    s.x1 = std::min(width - 1, static_cast<int>(std::floor(s.mx + r)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.my - r)));
    s.y1 = std::min(height - 1, static_cast<int>(std::floor(s.my + r)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) { return a.z < b.z; });
  return splats;
}

struct Contribution {
  int splat;
  double w;       // alpha * exp(-q / 2)
  double t_before;
};

}  // namespace

template <typename T>
Var<T> render_packed(const Var<T>& gaussians, const geometry::CameraPose& pose, const RenderOptions& opt) {
  geometry::validate(pose);
  if (gaussians.shape().size() != 2 || gaussians.dim(1) != kGaussianDim) {
    throw ShapeError("render: Gaussians must be [G, 14], got " + shape_str(gaussians.shape()));
  }
  const int width = pose.K.width, height = pose.K.height;
  const auto npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const bool record = grad_enabled() && gaussians.requires_grad();
  const auto& params = gaussians.value();
  auto splats = std::make_shared<std::vector<Splat>>(build_splats(params, pose, opt, record));

  std::vector<double> trans(npix, 1.0), color(npix * 3, 0.0), zsum(npix, 0.0);
  auto lists = std::make_shared<std::vector<std::vector<Contribution>>>(record ? npix : 0);
  for (std::size_t si = 0; si < splats->size(); ++si) {
    const Splat& s = (*splats)[si];
    const T* row = params.data() + static_cast<std::size_t>(s.row) * kGaussianDim;
    for (int py = s.y0; py <= s.y1; ++py) {
      const double dy = py - s.my;
      for (int px = s.x0; px <= s.x1; ++px) {
        const double dx = px - s.mx;
        const double q = s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
        if (q > s.qmax) continue;
        const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(width) + static_cast<std::size_t>(px);
        const double tb = trans[p];
        if (tb < opt.min_transmittance) continue;
        const double w = s.opacity * std::exp(-0.5 * q);
        for (int c = 0; c < 3; ++c) color[p * 3 + c] += tb * w * row[kColor + c];
        zsum[p] += tb * w * s.z;
        trans[p] = tb * (1.0 - w);
        if (record) (*lists)[p].push_back({static_cast<int>(si), w, tb});
      }
    }
  }

  Tensor<T> out(Shape{height, width, 5});
  for (std::size_t p = 0; p < npix; ++p) {
    const double a = 1.0 - trans[p];
    for (int c = 0; c < 3; ++c) out[p * 5 + c] = static_cast<T>(color[p * 3 + c] + trans[p] * opt.background[c]);
    out[p * 5 + 3] = static_cast<T>(a);
    out[p * 5 + 4] = static_cast<T>(zsum[p] / std::max(a, kMinAlpha));
  }
  if (!record) return Var<T>::constant(std::move(out));

  auto trans_final = std::make_shared<std::vector<double>>(std::move(trans));
  auto zs = std::make_shared<std::vector<double>>(std::move(zsum));
  return make_result<T>("render", std::move(out), {gaussians},
                        [splats, lists, trans_final, zs, opt, npix](Node<T>& nd) {
    auto& gp = nd.parents[0]->grad_buffer();
    const auto& params = nd.parents[0]->value;
    // Per-splat accumulators: (mx, my, a, b, c, z), color, opacity.
    std::vector<std::array<double, 6>> g_proj(splats->size(), std::array<double, 6>{});
    std::vector<std::array<double, 4>> g_direct(splats->size(), std::array<double, 4>{});
    const int width = static_cast<int>(nd.value.dim(1));
    for (std::size_t p = 0; p < npix; ++p) {
      const auto& list = (*lists)[p];
      if (list.empty()) continue;
      const T* go = nd.grad.data() + p * 5;
      const double tn = (*trans_final)[p];
      const double a = 1.0 - tn;
      double g_alpha = go[3];
      double g_z = 0.0;
      if (a > kMinAlpha) {
        g_z = go[4] / a;
        g_alpha -= go[4] * (*zs)[p] / (a * a);
      } else {
        g_z = go[4] / kMinAlpha;
      }
      const double gc[3] = {go[0], go[1], go[2]};
      // Normalized suffix sums: color, z and remaining transmittance behind entry i.
      double rc[3] = {opt.background[0], opt.background[1], opt.background[2]};
      double rz = 0.0, rt = 1.0;
      const int py = static_cast<int>(p / static_cast<std::size_t>(width));
      const int px = static_cast<int>(p % static_cast<std::size_t>(width));
      for (auto it = list.rbegin(); it != list.rend(); ++it) {
        const Splat& s = (*splats)[static_cast<std::size_t>(it->splat)];
        const T* row = params.data() + static_cast<std::size_t>(s.row) * kGaussianDim;
        const double w = it->w, tb = it->t_before;
        double gw = g_z * (s.z - rz) + g_alpha * rt;
        for (int c = 0; c < 3; ++c) gw += gc[c] * (row[kColor + c] - rc[c]);
        gw *= tb;
        auto& gd = g_direct[static_cast<std::size_t>(it->splat)];
        for (int c = 0; c < 3; ++c) gd[c] += gc[c] * tb * w;
        gd[3] += gw * w / s.opacity;
        auto& gproj = g_proj[static_cast<std::size_t>(it->splat)];
        gproj[5] += g_z * tb * w;
        const double dx = px - s.mx, dy = py - s.my;
        const double gq = -0.5 * gw * w;
        gproj[0] -= gq * 2.0 * (s.ca * dx + s.cb * dy);
        gproj[1] -= gq * 2.0 * (s.cb * dx + s.cc * dy);
        gproj[2] += gq * dx * dx;
        gproj[3] += gq * 2.0 * dx * dy;
        gproj[4] += gq * dy * dy;
        for (int c = 0; c < 3; ++c) rc[c] = w * row[kColor + c] + (1.0 - w) * rc[c];
        rz = w * s.z + (1.0 - w) * rz;
        rt = (1.0 - w) * rt;
      }
    }
    for (std::size_t si = 0; si < splats->size(); ++si) {
      const Splat& s = (*splats)[si];
      T* g = gp.data() + static_cast<std::size_t>(s.row) * kGaussianDim;
      const auto& gd = g_direct[si];
      for (int c = 0; c < 3; ++c) g[kColor + c] += static_cast<T>(gd[c]);
      g[kOpacity] += static_cast<T>(gd[3]);
      Eigen::Matrix<double, 1, 6> up;
      for (int k = 0; k < 6; ++k) up(k) = g_proj[si][static_cast<std::size_t>(k)];
      const Eigen::Matrix<double, 1, 10> gi = up * s.jac;
      for (int k = 0; k < 3; ++k) {
        g[kCenter + k] += static_cast<T>(gi(k));
        g[kScale + k] += static_cast<T>(gi(3 + k));
      }
      for (int k = 0; k < 4; ++k) g[kRotation + k] += static_cast<T>(gi(6 + k));
    }
  });
}

template <typename T>
RenderOut<T> render(const GaussianSet<T>& g, const geometry::CameraPose& pose, const RenderOptions& opt) {
  const Var<T> params = g.params.defined() ? g.params : empty_gaussians<T>().params;
  auto packed = render_packed(params, pose, opt);
  const int h = pose.K.height, w = pose.K.width;
  RenderOut<T> out;
  out.image = slice(packed, 2, 0, 3);
  out.alpha = reshape(slice(packed, 2, 3, 1), Shape{h, w});
  out.depth = reshape(slice(packed, 2, 4, 1), Shape{h, w});
  return out;
}

template Var<float> render_packed<float>(const Var<float>&, const geometry::CameraPose&, const RenderOptions&);
template Var<double> render_packed<double>(const Var<double>&, const geometry::CameraPose&, const RenderOptions&);
template RenderOut<float> render<float>(const GaussianSet<float>&, const geometry::CameraPose&, const RenderOptions&);
template RenderOut<double> render<double>(const GaussianSet<double>&, const geometry::CameraPose&,
                                          const RenderOptions&);

}  // namespace georecon::gsplat
