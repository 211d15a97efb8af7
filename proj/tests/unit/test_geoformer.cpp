// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "georecon/diffcore/gradcheck.hpp"
#include "georecon/geoformer/deform_sample.hpp"
#include "georecon/geoformer/geoformer.hpp"
#include "georecon/scenegen/render.hpp"
#include "support.hpp"

using namespace georecon;
using namespace georecon::geoformer;
using diffcore::Shape;
using georecon::testing::max_abs_diff;
using georecon::testing::random_tensor;

namespace {

GeoformerConfig tiny_config() {
  GeoformerConfig cfg;
  cfg.width = 12;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.points = 2;
  cfg.levels = 2;
  cfg.shared_dim = 4;
  cfg.fourier_freqs = 2;
  cfg.ffn_mult = 2;
  return cfg;
}

// Random feature pyramids with strides 8 and 4 for 32 x 32 views.
template <typename T>
std::vector<encoder::FeaturePyramid<T>> random_pyramids(int views, int levels, int c, std::mt19937_64& rng) {
  std::vector<encoder::FeaturePyramid<T>> out;
  for (int v = 0; v < views; ++v) {
    encoder::FeaturePyramid<T> p;
    p.view_index = v;
    const int strides[2] = {8, 4};
    for (int l = 0; l < levels; ++l) {
      const int s = strides[l];
      p.levels.push_back({Var<T>::leaf(random_tensor<T>({32 / s, 32 / s, c}, rng)), s});
    }
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
Tensor<T> random_coords(int n, std::mt19937_64& rng, double extent = 0.3) {
  return random_tensor<T>({n, 3}, rng, -extent, extent);
}

std::vector<Var<double>> all_params(const ParamStore<double>& store, const std::string& prefix = "") {
  std::vector<Var<double>> out;
  for (const auto& p : store.params()) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p.var);
  }
  return out;
}

// Plain bilinear lookup with integer-center texels and border clamping.
double bilinear_ref(const Tensor<double>& f, double x, double y, int ch) {
  const int h = f.dim(0), w = f.dim(1), c = f.dim(2);
  x = std::clamp(x, 0.0, w - 1.0);
  y = std::clamp(y, 0.0, h - 1.0);
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) { return f[static_cast<std::size_t>((yy * w + xx) * c + ch)]; };
  return (1 - fx) * (1 - fy) * at(y0, x0) + fx * (1 - fy) * at(y0, x1) + (1 - fx) * fy * at(y1, x0) +
         fx * fy * at(y1, x1);
}

Tensor<double> matmul_ref(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const int n = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  Tensor<double> y(Shape{n, cout});
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < cout; ++o) {
      double s = b[static_cast<std::size_t>(o)];
      for (int k = 0; k < cin; ++k) s += x[static_cast<std::size_t>(i * cin + k)] * w[static_cast<std::size_t>(k * cout + o)];
      y[static_cast<std::size_t>(i * cout + o)] = s;
    }
  }
  return y;
}

void randomize(ParamStore<double>& store, const std::string& name, std::mt19937_64& rng, double scale) {
  auto v = store.get(name);
  v.mutable_value() = random_tensor(v.shape(), rng, -scale, scale);
}

}  // namespace

TEST_CASE("anchor embedding: determinism, empty input, no collisions") {
  auto cfg = tiny_config();
  cfg.fourier_freqs = 6;
  std::mt19937_64 rng(1);
  ParamStore<double> store;
  AnchorEmbedding<double> embed(store, "a", cfg, rng);

  Tensor<double> two(Shape{2, 3}, {0.1, -0.2, 0.3, 0.1, -0.2, 0.3});
  auto t = embed(two);
  for (int k = 0; k < cfg.width; ++k) CHECK(t.feats.value()[static_cast<std::size_t>(k)] == t.feats.value()[static_cast<std::size_t>(cfg.width + k)]);

  auto empty = embed(Tensor<double>(Shape{0, 3}));
  CHECK(empty.size() == 0);
  CHECK(empty.feats.shape() == Shape{0, cfg.width});

  CHECK(fourier_embed(two, 6).shape() == Shape{2, 36});

  // 1000 distinct lattice points map to 1000 distinct embeddings.
  std::mt19937_64 draw(2);
  std::uniform_int_distribution<int> idx(-63, 63);
  std::vector<std::array<int, 3>> cells;
  while (cells.size() < 1000) {
    std::array<int, 3> c{idx(draw), idx(draw), idx(draw)};
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
  }
  Tensor<double> coords(Shape{1000, 3});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (int a = 0; a < 3; ++a) coords[i * 3 + static_cast<std::size_t>(a)] = cells[i][static_cast<std::size_t>(a)] / 128.0;
  }
  const auto f = fourier_embed(coords, 6);
  double min_dist = 1e9;
  for (int i = 0; i < 1000; ++i) {
    for (int j = i + 1; j < 1000; ++j) {
      double d = 0;
      for (int k = 0; k < 36; ++k) {
        const double e = f[static_cast<std::size_t>(i * 36 + k)] - f[static_cast<std::size_t>(j * 36 + k)];
        d += e * e;
      }
      min_dist = std::min(min_dist, d);
    }
  }
  CHECK(min_dist > 1e-6);
}

TEST_CASE("rope3d keeps only relative positions") {
  std::mt19937_64 rng(3);
  const int hd = 12;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = Var<double>::constant(random_tensor({1, hd}, rng));
    auto k = Var<double>::constant(random_tensor({1, hd}, rng));
    auto m = random_tensor({1, 3}, rng, -0.5, 0.5);
    auto n = random_tensor({1, 3}, rng, -0.5, 0.5);
    auto delta = random_tensor({1, 3}, rng, -0.5, 0.5);
    auto m2 = m, n2 = n;
    for (int a = 0; a < 3; ++a) {
      m2[static_cast<std::size_t>(a)] += delta[static_cast<std::size_t>(a)];
      n2[static_cast<std::size_t>(a)] += delta[static_cast<std::size_t>(a)];
    }
    auto dot = [&](const Tensor<double>& pm, const Tensor<double>& pn) {
      auto a = diffcore::rope3d(q, pm, hd).value();
      auto b = diffcore::rope3d(k, pn, hd).value();
      double s = 0;
      for (int c = 0; c < hd; ++c) s += a[static_cast<std::size_t>(c)] * b[static_cast<std::size_t>(c)];
      return s;
    };
    CHECK(std::abs(dot(m, n) - dot(m2, n2)) < 1e-5);
  }
}

TEST_CASE("self-attention: single token, translation invariance, gradient") {
  auto cfg = tiny_config();
  std::mt19937_64 rng(4);
  ParamStore<double> store;
  SelfAttention<double> sa(store, "sa", cfg, rng);
  randomize(store, "sa.out.w", rng, 0.5);
  randomize(store, "sa.out.b", rng, 0.5);
  randomize(store, "sa.qkv.b", rng, 0.5);

  // One token: softmax over one key returns its value row.
  auto x1 = random_tensor({1, cfg.width}, rng);
  auto c1 = random_coords<double>(1, rng);
  auto y1 = sa(Var<double>::constant(x1), c1).value();
  auto qkv = matmul_ref(x1, store.get("sa.qkv.w").value(), store.get("sa.qkv.b").value());
  Tensor<double> v(Shape{1, cfg.width});
  for (int k = 0; k < cfg.width; ++k) v[static_cast<std::size_t>(k)] = qkv[static_cast<std::size_t>(2 * cfg.width + k)];
  auto expect = matmul_ref(v, store.get("sa.out.w").value(), store.get("sa.out.b").value());
  CHECK(max_abs_diff(y1, expect) < 1e-12);

  const int n = 7;
  auto x = random_tensor({n, cfg.width}, rng);
  auto coords = random_coords<double>(n, rng);
  auto shifted = coords;
  const double shift[3] = {0.13, -0.07, 0.21};
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) shifted[static_cast<std::size_t>(i * 3 + a)] += shift[a];
  }
  auto y = sa(Var<double>::constant(x), coords).value();
  auto ys = sa(Var<double>::constant(x), shifted).value();
  CHECK(max_abs_diff(y, ys) < 1e-5);

  auto xin = Var<double>::leaf(x);
  auto leaves = all_params(store, "sa.");
  leaves.push_back(xin);
  auto report = diffcore::grad_check_leaves("self_attn", [&] { return sa(xin, coords); }, leaves);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("deform_sample matches a direct weighted bilinear sum") {
  std::mt19937_64 rng(5);
  const int n = 3, h = 2, l = 2, k = 3, c = 4;
  std::vector<Var<double>> maps = {Var<double>::leaf(random_tensor({4, 5, c}, rng)),
                                   Var<double>::leaf(random_tensor({8, 6, c}, rng))};
  auto base = random_tensor({n, l, 2}, rng, 0, 4);
  auto off = Var<double>::leaf(random_tensor({n, h, l, k, 2}, rng, -2, 2));
  auto a = Var<double>::leaf(random_tensor({n, h, l, k}, rng, 0, 1));
  std::vector<std::uint8_t> valid = {1, 0, 1};
  auto out = deform_sample(maps, base, valid, off, a, h).value();
  const int dh = c / h;
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const int hh = ch / dh;
      double expect = 0;
      if (valid[static_cast<std::size_t>(i)]) {
        for (int ll = 0; ll < l; ++ll) {
          for (int kk = 0; kk < k; ++kk) {
            const std::size_t ai = static_cast<std::size_t>(((i * h + hh) * l + ll) * k + kk);
            const double x = base[static_cast<std::size_t>((i * l + ll) * 2)] + off.value()[2 * ai];
            const double y = base[static_cast<std::size_t>((i * l + ll) * 2 + 1)] + off.value()[2 * ai + 1];
            expect += a.value()[ai] * bilinear_ref(maps[static_cast<std::size_t>(ll)].value(), x, y, ch);
          }
        }
      }
      CHECK(out[static_cast<std::size_t>(i * c + ch)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  auto report = diffcore::grad_check_leaves(
      "deform_sample", [&] { return deform_sample(maps, base, valid, off, a, h); }, {maps[0], maps[1], off, a});
  CHECK(report.max_rel_err < 1e-5);
  CHECK_THROWS_AS(deform_sample(maps, base, valid, off, a, 3), ShapeError);
}

TEST_CASE("cross-attention degenerates to projected bilinear sampling") {
  GeoformerConfig cfg = tiny_config();
  cfg.points = 1;
  cfg.levels = 1;
  std::mt19937_64 rng(6);
  ParamStore<double> store;
  DeformCrossAttention<double> ca(store, "ca", cfg, rng);
  randomize(store, "ca.out.b", rng, 0.3);
  randomize(store, "ca.value.b", rng, 0.3);

  auto pyr = random_pyramids<double>(1, 1, cfg.width, rng);
  auto pose = scenegen::orbit_cameras(1, {20.0}, 2.0, 32)[0];
  const int n = 9;
  auto coords = random_coords<double>(n, rng);
  auto x = random_tensor({n, cfg.width}, rng);
  auto views = prepare_views(coords, pyr, {pose});
  auto y = ca(Var<double>::constant(x), views).value();

  const auto& fmap = pyr[0].levels[0].map.value();
  const int fh = fmap.dim(0), fw = fmap.dim(1), c = cfg.width;
  auto vmap = matmul_ref(fmap.reshaped({fh * fw, c}), store.get("ca.value.w").value(), store.get("ca.value.b").value())
                  .reshaped({fh, fw, c});
  Tensor<double> sampled(Shape{n, c});
  for (int i = 0; i < n; ++i) {
    const auto* p = coords.data() + i * 3;
    const auto pr = geometry::project(geometry::Vec3(p[0], p[1], p[2]), pose);
    REQUIRE(pr.visible);
    const double fx = (pr.u - 3.5) / 8.0, fy = (pr.v - 3.5) / 8.0;
    for (int ch = 0; ch < c; ++ch) sampled[static_cast<std::size_t>(i * c + ch)] = bilinear_ref(vmap, fx, fy, ch);
  }
  auto expect = matmul_ref(sampled, store.get("ca.out.w").value(), store.get("ca.out.b").value());
  CHECK(max_abs_diff(y, expect) < 1e-12);
}

TEST_CASE("cross-attention ignores anchors no camera sees") {
  GeoformerConfig cfg = tiny_config();
  std::mt19937_64 rng(7);
  ParamStore<double> store;
  DeformCrossAttention<double> ca(store, "ca", cfg, rng);
  randomize(store, "ca.out.b", rng, 0.3);
  auto pyr = random_pyramids<double>(1, 2, cfg.width, rng);
  auto pose = scenegen::orbit_cameras(1, {20.0}, 2.0, 32)[0];
  // Behind the camera: step back from its origin along -forward.
  const geometry::Vec3 behind = pose.T.t - 0.5 * pose.T.R.col(2);
  Tensor<double> coords(Shape{2, 3}, {behind.x(), behind.y(), behind.z(), 0.0, 0.0, 0.0});
  auto x = random_tensor({2, cfg.width}, rng);
  auto views = prepare_views(coords, pyr, {pose});
  CHECK(views[0].visible == std::vector<std::uint8_t>{0, 1});
  auto y = ca(Var<double>::constant(x), views).value();
  for (int k = 0; k < cfg.width; ++k) {
    CHECK(y[static_cast<std::size_t>(k)] == 0.0);
    CHECK(y[static_cast<std::size_t>(cfg.width + k)] != 0.0);
  }
  CHECK_THROWS_AS(ca(Var<double>::constant(x), {}), ShapeError);
}

TEST_CASE("cross-attention gradients: tokens, feature maps, offset head") {
  GeoformerConfig cfg = tiny_config();
  std::mt19937_64 rng(8);
  ParamStore<double> store;
  DeformCrossAttention<double> ca(store, "ca", cfg, rng);
  randomize(store, "ca.offsets.w", rng, 0.8);
  randomize(store, "ca.offsets.b", rng, 0.8);
  randomize(store, "ca.out.w", rng, 0.5);
  auto pyr = random_pyramids<double>(3, 2, cfg.width, rng);
  auto poses = scenegen::orbit_cameras(3, {10.0, 25.0, 40.0}, 2.0, 32);
  const int n = 6;
  auto coords = random_coords<double>(n, rng);
  auto x = Var<double>::leaf(random_tensor({n, cfg.width}, rng));
  auto views = prepare_views(coords, pyr, poses);
  auto fn = [&] { return ca(x, views); };

  diffcore::GradCheckOptions opt;
  opt.max_entries_per_input = 40;
  auto r_tokens = diffcore::grad_check_leaves("cross_attn tokens", fn, {x}, opt);
  CHECK(r_tokens.max_rel_err < 1e-4);
  std::vector<Var<double>> maps;
  for (const auto& p : pyr) {
    for (const auto& l : p.levels) maps.push_back(l.map);
  }
  auto r_maps = diffcore::grad_check_leaves("cross_attn maps", fn, maps, opt);
  CHECK(r_maps.max_rel_err < 1e-4);
  auto r_off = diffcore::grad_check_leaves("cross_attn offsets", fn,
                                           {store.get("ca.offsets.w"), store.get("ca.offsets.b")}, opt);
  CHECK(r_off.max_rel_err < 1e-4);
  auto r_rest = diffcore::grad_check_leaves(
      "cross_attn heads", fn,
      {store.get("ca.weights.w"), store.get("ca.view_score.w"), store.get("ca.value.w"), store.get("ca.out.w")}, opt);
  CHECK(r_rest.max_rel_err < 1e-4);
}

TEST_CASE("block: zero output projections give the identity") {
  GeoformerConfig cfg = tiny_config();
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  GeoBlock<double> block(store, "b", cfg, rng);
  for (const char* name : {"b.self_attn.out.w", "b.self_attn.out.b", "b.cross_attn.out.w", "b.cross_attn.out.b",
                           "b.ffn.fc2.w", "b.ffn.fc2.b"}) {
    auto v = store.get(name);
    v.mutable_value() = Tensor<double>::zeros(v.shape());
  }
  auto pyr = random_pyramids<double>(2, 2, cfg.width, rng);
  auto poses = scenegen::orbit_cameras(2, {15.0, 30.0}, 2.0, 32);
  const int n = 5;
  AnchorSet<double> tokens{random_coords<double>(n, rng), Var<double>::constant(random_tensor({n, cfg.width}, rng))};
  auto out = block(tokens, prepare_views(tokens.coords, pyr, poses));
  CHECK(out.feats.value() == tokens.feats.value());
  CHECK(out.coords == tokens.coords);
}

TEST_CASE("two-block stack: end-to-end gradient and coords pass through") {
  GeoformerConfig cfg = tiny_config();
  std::mt19937_64 rng(10);
  ParamStore<double> store;
  Geoformer<double> model(store, "g", cfg, rng);
  for (auto& p : store.params()) {
    if (p.name.find(".out.") != std::string::npos || p.name.find(".fc2.") != std::string::npos ||
        p.name.find(".offsets.") != std::string::npos) {
      p.var.mutable_value() = random_tensor(p.var.shape(), rng, -0.3, 0.3);
    }
  }
  auto pyr = random_pyramids<double>(2, 2, cfg.width, rng);
  auto poses = scenegen::orbit_cameras(2, {15.0, 30.0}, 2.0, 32);
  const int n = 5;
  auto coords = random_coords<double>(n, rng);
  auto views = prepare_views(coords, pyr, poses);
  auto tokens = model.run_blocks(model.embed(coords), views);
  CHECK(tokens.coords == coords);

  diffcore::GradCheckOptions opt;
  opt.max_entries_per_input = 12;
  auto fn = [&] { return model(coords, pyr, poses); };
  auto report = diffcore::grad_check_leaves("geoformer stack", fn, all_params(store), opt);
  CHECK(report.max_rel_err < 1e-4);
  CHECK(report.checked > 100);
}

TEST_CASE("geoformer is equivariant to token order") {
  GeoformerConfig cfg = tiny_config();
  std::mt19937_64 rng(11);
  ParamStore<double> store;
  Geoformer<double> model(store, "g", cfg, rng);
  randomize(store, "g.block0.cross_attn.offsets.w", rng, 0.5);
  auto pyr = random_pyramids<double>(2, 2, cfg.width, rng);
  auto poses = scenegen::orbit_cameras(2, {15.0, 30.0}, 2.0, 32);
  const int n = 11;
  auto coords = random_coords<double>(n, rng);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> permuted(Shape{n, 3});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) permuted[static_cast<std::size_t>(i * 3 + a)] = coords[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)] * 3 + a)];
  }
  auto y = model(coords, pyr, poses).value();
  auto yp = model(permuted, pyr, poses).value();
  double err = 0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < cfg.width; ++k) {
      err = std::max(err, std::abs(yp[static_cast<std::size_t>(i * cfg.width + k)] -
                                   y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)] * cfg.width + k)]));
    }
  }
  CHECK(err < 1e-10);
}

TEST_CASE("geoformer runs on empty and long token sequences") {
  GeoformerConfig cfg = tiny_config();
  cfg.layers = 1;
  std::mt19937_64 rng(12);
  ParamStore<float> store;
  Geoformer<float> model(store, "g", cfg, rng);
  auto pyr = random_pyramids<float>(1, 2, cfg.width, rng);
  auto poses = scenegen::orbit_cameras(1, {20.0}, 2.0, 32);
  CHECK(model(Tensor<float>(Shape{0, 3}), pyr, poses).shape() == Shape{0, cfg.width});
  diffcore::NoGradGuard guard;
  for (int n : {4096, 16384}) {
    auto y = model(random_coords<float>(n, rng, 0.5), pyr, poses);
    CHECK(y.shape() == Shape{n, cfg.width});
    CHECK(y.value().all_finite());
  }
  CHECK_THROWS_AS(model(Tensor<float>(Shape{2, 3}), pyr, {}), ShapeError);
}

TEST_CASE("config validation") {
  GeoformerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 5;
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  cfg = GeoformerConfig{};
  cfg.width = 64;
  cfg.heads = 4;  // 16-wide heads cannot split into three rotary groups
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  cfg.use_rope = false;
  CHECK_NOTHROW(cfg.validate());
}
