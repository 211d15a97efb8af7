// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/gradient_suite.hpp"

#include <Eigen/Geometry>
#include <chrono>
#include <cstdio>
#include <random>

#include "georecon/diffcore/ops.hpp"
#include "georecon/geoformer/deform_sample.hpp"
#include "georecon/geoformer/geoformer.hpp"
#include "georecon/gsplat/render.hpp"
#include "georecon/losses/losses.hpp"
#include "georecon/occupancy/occupancy.hpp"
#include "georecon/scenegen/render.hpp"

namespace georecon::pipeline {

using namespace diffcore;

namespace {

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

void merge(GradCheckReport& into, const GradCheckReport& r) {
  if (into.checked == 0 || r.max_rel_err > into.max_rel_err) {
    into.max_rel_err = r.max_rel_err;
    into.worst_index = r.worst_index;
  }
  into.checked += r.checked;
  into.skipped += r.skipped;
  into.notes.insert(into.notes.end(), r.notes.begin(), r.notes.end());
}

class Suite {
 public:
  Suite(int seeds, const std::function<void(const SuiteEntry&)>& cb) : seeds_(seeds), cb_(cb) {}

  // Explicit-input check repeated over seeds.
  void inputs(const std::string& name, double tol,
              const std::function<std::vector<Tensor<double>>(std::mt19937_64&)>& make, const GradFn& fn,
              GradCheckOptions opt = {}) {
    run(name, tol, [&](std::mt19937_64& rng, std::uint64_t s) {
      opt.seed = s;
      return grad_check(name, fn, make(rng), opt);
    });
  }

  // Arbitrary check per seed (models built from the seed).
  void custom(const std::string& name, double tol,
              const std::function<GradCheckReport(std::mt19937_64&, std::uint64_t)>& body) {
    run(name, tol, body);
  }

  std::vector<SuiteEntry> take() { return std::move(entries_); }

 private:
  void run(const std::string& name, double tol,
           const std::function<GradCheckReport(std::mt19937_64&, std::uint64_t)>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteEntry e;
    e.tolerance = tol;
    e.report.op_name = name;
    for (int s = 0; s < seeds_; ++s) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(s) * 104729 + 7);
      merge(e.report, body(rng, static_cast<std::uint64_t>(s)));
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cb_) cb_(e);
    entries_.push_back(std::move(e));
  }

  int seeds_;
  std::function<void(const SuiteEntry&)> cb_;
  std::vector<SuiteEntry> entries_;
};

geoformer::GeoformerConfig small_geoformer() {
  geoformer::GeoformerConfig cfg;
  cfg.width = 12;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.points = 2;
  cfg.levels = 2;
  cfg.shared_dim = 4;
  cfg.fourier_freqs = 2;
  cfg.ffn_mult = 2;
  return cfg;
}

std::vector<encoder::FeaturePyramid<double>> random_pyramids(int views, int c, std::mt19937_64& rng) {
  std::vector<encoder::FeaturePyramid<double>> out;
  for (int v = 0; v < views; ++v) {
    encoder::FeaturePyramid<double> p;
    p.view_index = v;
    for (int s : {8, 4}) p.levels.push_back({Var<double>::leaf(uniform({32 / s, 32 / s, c}, rng)), s});
    out.push_back(std::move(p));
  }
  return out;
}

void perturb(ParamStore<double>& store, const std::string& needle, std::mt19937_64& rng, double scale) {
  for (auto& p : store.params()) {
    if (p.name.find(needle) != std::string::npos) p.var.mutable_value() = uniform(p.var.shape(), rng, -scale, scale);
  }
}

std::vector<Var<double>> params_of(const ParamStore<double>& store) {
  std::vector<Var<double>> out;
  for (const auto& p : store.params()) out.push_back(p.var);
  return out;
}

Tensor<double> random_gaussians(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> g(Shape{n, gsplat::kGaussianDim});
  for (int i = 0; i < n; ++i) {
    double* r = g.data() + static_cast<std::size_t>(i) * gsplat::kGaussianDim;
    for (int k = 0; k < 3; ++k) {
      r[gsplat::kCenter + k] = (2 * u(rng) - 1) * 0.25;
      r[gsplat::kColor + k] = u(rng);
      r[gsplat::kScale + k] = 0.1 + 0.2 * u(rng);
    }
    Eigen::Quaterniond q(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    q.normalize();
    r[gsplat::kRotation] = q.w();
    r[gsplat::kRotation + 1] = q.x();
    r[gsplat::kRotation + 2] = q.y();
    r[gsplat::kRotation + 3] = q.z();
    r[gsplat::kOpacity] = 0.1 + 0.8 * u(rng);
  }
  return g;
}

geometry::CameraPose suite_camera(int res) {
  geometry::CameraPose pose;
  pose.K = geometry::intrinsics_from_fov(res, res, 60.0);
  pose.T = geometry::look_at(geometry::Vec3(0, -2, 0.3), geometry::Vec3::Zero());
  return pose;
}

void primitives(Suite& s) {
  s.inputs("linear", 1e-4,
           [](auto& r) { return std::vector{uniform({4, 5}, r), uniform({5, 3}, r), uniform({3}, r)}; },
           [](auto& in) { return linear(in[0], in[1], in[2]); });
  auto one = [](auto& r) { return std::vector{uniform({4, 6}, r, -3, 3)}; };
  s.inputs("silu", 1e-4, one, [](auto& in) { return silu(in[0]); });
  s.inputs("sigmoid", 1e-4, one, [](auto& in) { return sigmoid(in[0]); });
  s.inputs("softmax", 1e-4, one, [](auto& in) { return softmax(in[0], 1); });
  s.inputs("sigmoid_chain", 1e-4, one, [](auto& in) { return sigmoid(sigmoid(sigmoid(in[0]))); });
  s.inputs("masked_softmax", 1e-4, [](auto& r) { return std::vector{uniform({3, 4}, r, -3, 3)}; },
           [](auto& in) {
             Tensor<double> mask({3, 4}, {1, 1, 0, 1, 0, 0, 0, 0, 0, 1, 1, 1});
             return masked_softmax(in[0], mask);
           });
  s.inputs("rmsnorm", 1e-4, [](auto& r) { return std::vector{uniform({4, 6}, r, -2, 2), uniform({6}, r)}; },
           [](auto& in) { return rmsnorm(in[0], in[1]); });
  s.inputs("concat_slice", 1e-4, [](auto& r) { return std::vector{uniform({3, 2}, r), uniform({3, 5}, r)}; },
           [](auto& in) {
             auto c = concat<double>({in[0], in[1]}, 1);
             return mul(slice(c, 1, 1, 4), slice(c, 1, 3, 4));
           });
  s.inputs("weighted_sum", 1e-4,
           [](auto& r) { return std::vector{uniform({4, 2}, r), uniform({4, 3}, r), uniform({4, 3}, r)}; },
           [](auto& in) { return weighted_sum(in[0], {in[1], in[2]}); });
  s.inputs("mse", 1e-4, [](auto& r) { return std::vector{uniform({6}, r), uniform({6}, r)}; },
           [](auto& in) { return mse(in[0], in[1]); });
  s.inputs("conv2d", 1e-4,
           [](auto& r) { return std::vector{uniform({7, 6, 3}, r), uniform({3, 3, 3, 4}, r), uniform({4}, r)}; },
           [](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); });
  s.inputs("attention", 1e-4,
           [](auto& r) { return std::vector{uniform({5, 8}, r), uniform({6, 8}, r), uniform({6, 8}, r)}; },
           [](auto& in) { return attention(in[0], in[1], in[2], 2); });
  GradCheckOptions bil;
  bil.skip = skip_integer_coordinates(1, 2e-4);
  s.inputs("bilinear_sample", 1e-4,
           [](auto& r) { return std::vector{uniform({5, 6, 3}, r), uniform({7, 2}, r, 0.1, 3.9)}; },
           [](auto& in) { return bilinear_sample(in[0], in[1]); }, bil);
  GradCheckOptions rope;
  rope.differentiable = {true, false};
  s.inputs("rope3d", 1e-4, [](auto& r) { return std::vector{uniform({4, 12}, r), uniform({4, 3}, r, -0.5, 0.5)}; },
           [](auto& in) { return rope3d(in[0], in[1].value(), 6); }, rope);
}

void transformer(Suite& s) {
  s.custom("deform_sample", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    std::vector<Var<double>> maps = {Var<double>::leaf(uniform({4, 5, 4}, rng)), Var<double>::leaf(uniform({8, 6, 4}, rng))};
    auto base = uniform({3, 2, 2}, rng, 0.3, 3.7);
    auto off = Var<double>::leaf(uniform({3, 2, 2, 3, 2}, rng, -1.5, 1.5));
    auto a = Var<double>::leaf(uniform({3, 2, 2, 3}, rng, 0, 1));
    const std::vector<std::uint8_t> valid = {1, 0, 1};
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check_leaves(
        "deform_sample", [&] { return geoformer::deform_sample(maps, base, valid, off, a, 2); }, {maps[0], maps[1], off, a},
        opt);
  });

  s.custom("self_attention_rope", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto cfg = small_geoformer();
    ParamStore<double> store;
    geoformer::SelfAttention<double> sa(store, "sa", cfg, rng);
    perturb(store, ".out.", rng, 0.5);
    auto x = Var<double>::leaf(uniform({6, cfg.width}, rng));
    auto coords = uniform({6, 3}, rng, -0.4, 0.4);
    auto leaves = params_of(store);
    leaves.push_back(x);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check_leaves("self_attention_rope", [&] { return sa(x, coords); }, leaves, opt);
  });

  s.custom("deform_cross_attention", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto cfg = small_geoformer();
    ParamStore<double> store;
    geoformer::DeformCrossAttention<double> ca(store, "ca", cfg, rng);
    perturb(store, ".offsets.", rng, 0.8);
    perturb(store, ".out.", rng, 0.5);
    auto pyr = random_pyramids(3, cfg.width, rng);
    auto poses = scenegen::orbit_cameras(3, {10.0, 25.0, 40.0}, 2.0, 32);
    auto coords = uniform({5, 3}, rng, -0.3, 0.3);
    auto x = Var<double>::leaf(uniform({5, cfg.width}, rng));
    auto views = geoformer::prepare_views(coords, pyr, poses);
    std::vector<Var<double>> leaves = params_of(store);
    leaves.push_back(x);
    for (const auto& p : pyr) {
      for (const auto& l : p.levels) leaves.push_back(l.map);
    }
    GradCheckOptions opt;
    opt.seed = seed;
    opt.max_entries_per_input = 30;
    return grad_check_leaves("deform_cross_attention", [&] { return ca(x, views); }, leaves, opt);
  });

  // Sampling-coordinate gradient: offsets are the only path into the
  // bilinear coordinates, so check them alone with every entry.
  s.custom("deform_cross_attention_coords", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto cfg = small_geoformer();
    ParamStore<double> store;
    geoformer::DeformCrossAttention<double> ca(store, "ca", cfg, rng);
    perturb(store, ".offsets.", rng, 0.8);
    auto pyr = random_pyramids(2, cfg.width, rng);
    auto poses = scenegen::orbit_cameras(2, {15.0, 35.0}, 2.0, 32);
    auto coords = uniform({4, 3}, rng, -0.3, 0.3);
    auto x = Var<double>::constant(uniform({4, cfg.width}, rng));
    auto views = geoformer::prepare_views(coords, pyr, poses);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check_leaves("deform_cross_attention_coords", [&] { return ca(x, views); },
                             {store.get("ca.offsets.w"), store.get("ca.offsets.b")}, opt);
  });

  s.custom("geo_block", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto cfg = small_geoformer();
    ParamStore<double> store;
    geoformer::GeoBlock<double> block(store, "b", cfg, rng);
    perturb(store, ".out.", rng, 0.3);
    perturb(store, ".fc2.", rng, 0.3);
    perturb(store, ".offsets.", rng, 0.5);
    auto pyr = random_pyramids(2, cfg.width, rng);
    auto poses = scenegen::orbit_cameras(2, {15.0, 30.0}, 2.0, 32);
    auto coords = uniform({5, 3}, rng, -0.3, 0.3);
    auto x = Var<double>::leaf(uniform({5, cfg.width}, rng));
    auto views = geoformer::prepare_views(coords, pyr, poses);
    auto leaves = params_of(store);
    leaves.push_back(x);
    GradCheckOptions opt;
    opt.seed = seed;
    opt.max_entries_per_input = 24;
    return grad_check_leaves(
        "geo_block", [&] { return block(geoformer::AnchorSet<double>{coords, x}, views).feats; }, leaves, opt);
  });
}

void splats(Suite& s) {
  s.custom("decode", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    gsplat::DecodeConfig cfg;
    cfg.width = 6;
    cfg.hidden = 8;
    cfg.per_token = 2;
    ParamStore<double> store;
    gsplat::GaussianHead<double> head(store, "d", cfg, rng);
    store.get("d.out.w").mutable_value() = uniform(store.get("d.out.w").shape(), rng, -0.5, 0.5);
    auto tokens = Var<double>::leaf(uniform({3, 6}, rng));
    auto anchors = uniform({3, 3}, rng, -0.4, 0.4);
    auto leaves = params_of(store);
    leaves.push_back(tokens);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check_leaves("decode", [&] { return head(tokens, anchors).params; }, leaves, opt);
  });

  s.custom("render", 1e-3, [](std::mt19937_64& rng, std::uint64_t seed) {
    const auto pose = suite_camera(12);
    GradCheckOptions opt;
    opt.eps = 1e-6;
    opt.seed = seed;
    return grad_check(
        "render", [&](const std::vector<Var<double>>& in) { return gsplat::render_packed(in[0], pose); },
        {random_gaussians(4, rng)}, opt);
  });
}

void loss_terms(Suite& s) {
  auto binary = [](std::mt19937_64& rng) {
    Tensor<double> gt(Shape{4, 4, 4});
    std::bernoulli_distribution occ(0.2);
    for (auto& v : gt.vec()) v = occ(rng) ? 1.0 : 0.0;
    gt[0] = 1.0;
    gt[1] = 0.0;
    return gt;
  };
  s.custom("stage1_loss", 1e-4, [&](std::mt19937_64& rng, std::uint64_t seed) {
    auto gt = binary(rng);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check(
        "stage1_loss", [&](const std::vector<Var<double>>& in) { return occupancy::stage1_loss(in[0], gt); },
        {uniform({4, 4, 4}, rng, 0.05, 0.95)}, opt);
  });
  s.custom("stage1_loss_logits", 1e-4, [&](std::mt19937_64& rng, std::uint64_t seed) {
    auto gt = binary(rng);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check(
        "stage1_loss_logits",
        [&](const std::vector<Var<double>>& in) { return occupancy::stage1_loss_logits(in[0], gt); },
        {uniform({4, 4, 4}, rng, -4, 4)}, opt);
  });
  s.custom("affinity_loss", 1e-4, [&](std::mt19937_64& rng, std::uint64_t seed) {
    auto gt = binary(rng);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check(
        "affinity_loss", [&](const std::vector<Var<double>>& in) { return occupancy::affinity_loss(in[0], gt); },
        {uniform({4, 4, 4}, rng, 0.05, 0.95)}, opt);
  });
  s.custom("image_loss", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    const losses::PerceptualProxy<double> proxy(1234 + seed);
    auto target = uniform({12, 12, 3}, rng, 0, 1);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check(
        "image_loss",
        [&](const std::vector<Var<double>>& in) {
          auto l = losses::image_loss(in[0], target, proxy);
          return add(l.l2, l.perc);
        },
        {uniform({12, 12, 3}, rng, 0.1, 0.9)}, opt);
  });
  s.custom("mask_loss", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto target = uniform({6, 5}, rng, 0, 1);
    GradCheckOptions opt;
    opt.seed = seed;
    return grad_check(
        "mask_loss", [&](const std::vector<Var<double>>& in) { return losses::mask_loss(in[0], target); },
        {uniform({6, 5}, rng, 0, 1)}, opt);
  });
  s.custom("depth_loss", 1e-4, [](std::mt19937_64& rng, std::uint64_t seed) {
    auto target = uniform({8, 8}, rng, 1, 2);
    target[3] = 0.0;  // one background pixel
    auto img = uniform({8, 8, 3}, rng, 0, 1);
    GradCheckOptions opt;
    opt.seed = seed;
    // |pred - target| has a kink; skip entries a central difference would straddle.
    opt.skip = [&target, eps = opt.eps](std::size_t, std::size_t i, const std::vector<Tensor<double>>& in) {
      return std::abs(in[0][i] - target[i]) < 2 * eps;
    };
    return grad_check(
        "depth_loss", [&](const std::vector<Var<double>>& in) { return losses::depth_loss(in[0], target, img); },
        {uniform({8, 8}, rng, 1, 2)}, opt);
  });
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite(int seeds, const std::function<void(const SuiteEntry&)>& on_entry) {
  Suite s(seeds, on_entry);
  primitives(s);
  transformer(s);
  splats(s);
  loss_terms(s);
  return s.take();
}

std::string format_suite_entry(const SuiteEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-32s max_rel_err %.3e (tol %.0e) checked %zu skipped %zu %6.2fs %s",
                e.report.op_name.c_str(), e.report.max_rel_err, e.tolerance, e.report.checked, e.report.skipped,
                e.seconds, e.passed() ? "ok" : "FAIL");
  return buf;
}

}  // namespace georecon::pipeline
