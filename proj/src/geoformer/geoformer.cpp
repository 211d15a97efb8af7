// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/geoformer/geoformer.hpp"

#include <cmath>
#include <numbers>

#include "georecon/errors.hpp"
#include "georecon/geoformer/deform_sample.hpp"

namespace georecon::geoformer {

using namespace diffcore;

void GeoformerConfig::validate() const {
  if (width < 1 || heads < 1 || width % heads != 0) throw ShapeError("geoformer: heads must divide the width");
  if (use_rope && head_dim() % 6 != 0) throw ShapeError("geoformer: rope needs a head width divisible by 6");
  if (points < 1) throw ShapeError("geoformer: need at least one sampling point");
  if (levels < 1) throw ShapeError("geoformer: need at least one feature level");
  if (layers < 0 || shared_dim < 0 || fourier_freqs < 1 || ffn_mult < 1) throw ShapeError("geoformer: bad config");
}

template <typename T>
Tensor<T> fourier_embed(const Tensor<T>& coords, int freqs) {
  if (coords.rank() != 2 || coords.dim(1) != 3) throw ShapeError("fourier_embed: coords must be [N, 3]");
  const int n = coords.dim(0);
  const int d = 6 * freqs;
  Tensor<T> out(Shape{n, d});
  for (int i = 0; i < n; ++i) {
    T* row = out.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d);
    for (int a = 0; a < 3; ++a) {
      const double x = static_cast<double>(coords[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(a)]);
      for (int k = 0; k < freqs; ++k) {
        const double arg = std::ldexp(std::numbers::pi, k) * x;
        row[(a * freqs + k) * 2] = static_cast<T>(std::sin(arg));
        row[(a * freqs + k) * 2 + 1] = static_cast<T>(std::cos(arg));
      }
    }
  }
  return out;
}

template <typename T>
std::vector<ViewContext<T>> prepare_views(const Tensor<T>& coords, const std::vector<encoder::FeaturePyramid<T>>& pyramids,
                                          const std::vector<geometry::CameraPose>& poses) {
  if (pyramids.empty()) throw ShapeError("geoformer: no input views");
  if (pyramids.size() != poses.size()) throw ShapeError("geoformer: pyramid and pose counts differ");
  if (coords.rank() != 2 || coords.dim(1) != 3) throw ShapeError("geoformer: coords must be [N, 3]");
  const int n = coords.dim(0);
  std::vector<ViewContext<T>> views(pyramids.size());
  for (std::size_t v = 0; v < pyramids.size(); ++v) {
    const auto& pyr = pyramids[v];
    const int levels = static_cast<int>(pyr.levels.size());
    auto& ctx = views[v];
    for (const auto& lvl : pyr.levels) ctx.maps.push_back(lvl.map);
    ctx.base = Tensor<T>(Shape{n, levels, 2});
    ctx.visible.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      const auto* c = coords.data() + static_cast<std::size_t>(i) * 3;
      const auto p = geometry::project(geometry::Vec3(c[0], c[1], c[2]), poses[v]);
      ctx.visible[static_cast<std::size_t>(i)] = p.visible ? 1 : 0;
      for (int l = 0; l < levels; ++l) {
        const int stride = pyr.levels[static_cast<std::size_t>(l)].stride;
        const std::size_t o = (static_cast<std::size_t>(i) * static_cast<std::size_t>(levels) + static_cast<std::size_t>(l)) * 2;
        ctx.base[o] = static_cast<T>(geometry::to_feature_coord(p.u, stride));
        ctx.base[o + 1] = static_cast<T>(geometry::to_feature_coord(p.v, stride));
      }
    }
  }
  return views;
}

template <typename T>
AnchorEmbedding<T>::AnchorEmbedding(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg,
                                    std::mt19937_64& rng)
    : freqs_(cfg.fourier_freqs), width_(cfg.width) {
  if (cfg.shared_dim > 0) {
    shared_ = store.add(prefix + ".shared", nn::init_tensor<T>(Shape{cfg.shared_dim}, 1, nn::Init::kSmall, rng));
  }
  proj_ = nn::Linear<T>(store, prefix + ".proj", 6 * cfg.fourier_freqs + cfg.shared_dim, cfg.width, rng);
}

template <typename T>
AnchorSet<T> AnchorEmbedding<T>::operator()(const Tensor<T>& coords) const {
  auto fe = fourier_embed(coords, freqs_);
  const int n = coords.dim(0);
  AnchorSet<T> out;
  out.coords = coords;
  if (n == 0) {
    out.feats = Var<T>::constant(Tensor<T>(Shape{0, width_}));
    return out;
  }
  Var<T> in = Var<T>::constant(std::move(fe));
  if (shared_.defined()) in = concat<T>({in, broadcast_rows(shared_, n)}, 1);
  out.feats = proj_(in);
  return out;
}

template <typename T>
SelfAttention<T>::SelfAttention(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg,
                                std::mt19937_64& rng)
    : cfg_(cfg),
      qkv_(store, prefix + ".qkv", cfg.width, 3 * cfg.width, rng),
      out_(store, prefix + ".out", cfg.width, cfg.width, rng, nn::Init::kSmall) {}

template <typename T>
Var<T> SelfAttention<T>::operator()(const Var<T>& x, const Tensor<T>& coords) const {
  const int c = cfg_.width;
  auto qkv = qkv_(x);
  auto q = slice(qkv, 1, 0, c);
  auto k = slice(qkv, 1, c, c);
  auto v = slice(qkv, 1, 2 * c, c);
  if (cfg_.use_rope) {
    const T s = static_cast<T>(cfg_.rope_scale);
    q = rope3d(q, coords, cfg_.head_dim(), s);
    k = rope3d(k, coords, cfg_.head_dim(), s);
  }
  return out_(attention(q, k, v, cfg_.heads));
}

template <typename T>
DeformCrossAttention<T>::DeformCrossAttention(ParamStore<T>& store, const std::string& prefix,
                                              const GeoformerConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      value_(store, prefix + ".value", cfg.width, cfg.width, rng),
      offsets_(store, prefix + ".offsets", cfg.width, cfg.heads * cfg.levels * cfg.points * 2, rng, nn::Init::kZero),
      weights_(store, prefix + ".weights", cfg.width, cfg.heads * cfg.levels * cfg.points, rng),
      view_score_(store, prefix + ".view_score", cfg.width, 1, rng),
      out_(store, prefix + ".out", cfg.width, cfg.width, rng, nn::Init::kSmall) {}

template <typename T>
Var<T> DeformCrossAttention<T>::operator()(const Var<T>& x, const std::vector<ViewContext<T>>& views) const {
  if (views.empty()) throw ShapeError("deform_cross_attn: no input views");
  const int n = x.dim(0);
  const int h = cfg_.heads, l = cfg_.levels, k = cfg_.points;
  const int nv = static_cast<int>(views.size());

  auto off = reshape(offsets_(x), Shape{n, h, l, k, 2});
  auto a = reshape(softmax(reshape(weights_(x), Shape{n * h, l * k})), Shape{n, h, l, k});

  std::vector<Var<T>> aggs, scores;
  Tensor<T> mask(Shape{n, nv});
  for (int v = 0; v < nv; ++v) {
    const auto& view = views[static_cast<std::size_t>(v)];
    if (static_cast<int>(view.maps.size()) != l) {
      throw ShapeError("deform_cross_attn: view has " + std::to_string(view.maps.size()) + " levels, expected " +
                       std::to_string(l));
    }
    if (view.base.rank() != 3 || view.base.dim(0) != n) throw ShapeError("deform_cross_attn: stale view context");
    std::vector<Var<T>> values;
    for (const auto& m : view.maps) values.push_back(value_(m));
    auto agg = deform_sample(values, view.base, view.visible, off, a, h);
    scores.push_back(view_score_(agg));
    aggs.push_back(agg);
    for (int i = 0; i < n; ++i) mask[static_cast<std::size_t>(i * nv + v)] = view.visible[static_cast<std::size_t>(i)];
  }
  auto w = masked_softmax(concat(scores, 1), mask);
  auto y = out_(weighted_sum(w, aggs));
  // Anchors seen by no view contribute nothing.
  Tensor<T> rows(Shape{n, cfg_.width});
  for (int i = 0; i < n; ++i) {
    bool any = false;
    for (int v = 0; v < nv; ++v) any = any || mask[static_cast<std::size_t>(i * nv + v)] != T(0);
    if (!any) continue;
    std::fill_n(rows.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg_.width), cfg_.width, T(1));
  }
  return mul(y, Var<T>::constant(std::move(rows)));
}

template <typename T>
GeoBlock<T>::GeoBlock(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg,
                      std::mt19937_64& rng)
    : norm1_(store, prefix + ".norm1", cfg.width),
      norm2_(store, prefix + ".norm2", cfg.width),
      norm3_(store, prefix + ".norm3", cfg.width),
      self_attn_(store, prefix + ".self_attn", cfg, rng),
      cross_attn_(store, prefix + ".cross_attn", cfg, rng),
      ffn_(store, prefix + ".ffn", cfg.width, cfg.ffn_mult * cfg.width, rng) {}

template <typename T>
AnchorSet<T> GeoBlock<T>::operator()(const AnchorSet<T>& tokens, const std::vector<ViewContext<T>>& views) const {
  if (tokens.size() == 0) return tokens;
  Var<T> x = tokens.feats;
  x = add(x, self_attn_(norm1_(x), tokens.coords));
  x = add(x, cross_attn_(norm2_(x), views));
  x = add(x, ffn_(norm3_(x)));
  return AnchorSet<T>{tokens.coords, x};
}

template <typename T>
Geoformer<T>::Geoformer(ParamStore<T>& store, const std::string& prefix, const GeoformerConfig& cfg,
                        std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  embed_ = AnchorEmbedding<T>(store, prefix + ".embed", cfg_, rng);
  for (int i = 0; i < cfg_.layers; ++i) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), cfg_, rng);
  }
  final_norm_ = nn::RMSNorm<T>(store, prefix + ".norm", cfg_.width);
}

template <typename T>
AnchorSet<T> Geoformer<T>::run_blocks(AnchorSet<T> tokens, const std::vector<ViewContext<T>>& views) const {
  for (const auto& b : blocks_) tokens = b(tokens, views);
  return tokens;
}

template <typename T>
Var<T> Geoformer<T>::operator()(const Tensor<T>& coords, const std::vector<encoder::FeaturePyramid<T>>& pyramids,
                                const std::vector<geometry::CameraPose>& poses) const {
  auto views = prepare_views(coords, pyramids, poses);
  auto tokens = run_blocks(embed(coords), views);
  if (tokens.size() == 0) return tokens.feats;
  return final_norm_(tokens.feats);
}

#define GEORECON_INSTANTIATE(T)                                                                             \
  template Tensor<T> fourier_embed<T>(const Tensor<T>&, int);                                               \
  template std::vector<ViewContext<T>> prepare_views<T>(const Tensor<T>&,                                   \
                                                        const std::vector<encoder::FeaturePyramid<T>>&,     \
                                                        const std::vector<geometry::CameraPose>&);          \
  template class AnchorEmbedding<T>;                                                                        \
  template class SelfAttention<T>;                                                                          \
  template class DeformCrossAttention<T>;                                                                   \
  template class GeoBlock<T>;                                                                               \
  template class Geoformer<T>;

GEORECON_INSTANTIATE(float)
GEORECON_INSTANTIATE(double)

}  // namespace georecon::geoformer
