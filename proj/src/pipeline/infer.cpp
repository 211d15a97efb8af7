// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/infer.hpp"

#include <algorithm>
#include <filesystem>

#include "georecon/errors.hpp"
#include "georecon/gsplat/render.hpp"

namespace georecon::pipeline {

namespace fs = std::filesystem;
using diffcore::Shape;
using diffcore::Tensor;
using diffcore::Var;

Reconstructor::Reconstructor(const Checkpoint* stage1, const Checkpoint& stage2) {
  cfg2_ = parse_config(stage2.config);
  recon_ = std::make_unique<ReconBundle<float>>(cfg2_);
  restore_params(stage2, recon_->store);
  if (stage1 != nullptr) {
    cfg1_ = parse_config(stage1->config);
    if (cfg1_.fine != cfg2_.fine) throw ShapeError("stage checkpoints disagree on the fine resolution");
    proposal_ = std::make_unique<ProposalBundle<float>>(cfg1_);
    restore_params(*stage1, proposal_->store);
  }
}

InferenceResult Reconstructor::infer(const std::vector<Tensor<float>>& images,
                                     const std::vector<geometry::CameraPose>& poses, std::size_t max_tokens) const {
  if (!proposal_) throw IoError("inference needs a stage-one checkpoint");
  if (images.size() != poses.size()) throw ShapeError("infer: image and pose counts differ");
  if (images.empty()) throw ShapeError("infer: need at least one input view");
  diffcore::NoGradGuard guard;
  auto grid = proposal_->model->predict(images, poses);
  auto anchors = occupancy::select_anchors<float>(grid, static_cast<float>(cfg2_.threshold), max_tokens);
  InferenceResult r = reconstruct(images, poses, anchors);
  r.grid = std::move(grid);
  return r;
}

InferenceResult Reconstructor::reconstruct(const std::vector<Tensor<float>>& images,
                                           const std::vector<geometry::CameraPose>& poses,
                                           const Tensor<float>& anchors) const {
  if (images.size() != poses.size()) throw ShapeError("infer: image and pose counts differ");
  diffcore::NoGradGuard guard;
  InferenceResult r;
  r.anchors = anchors;
  const auto g = (*recon_->model)(images, poses, anchors);
  r.gaussians = g.size() > 0 ? g.params.value() : Tensor<float>(Shape{0, gsplat::kGaussianDim});
  return r;
}

void write_inference(const std::string& dir, const InferenceResult& result) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  gsplat::write_gaussians((fs::path(dir) / "gaussians.3dgs").string(), result.gaussians);
  if (result.grid.resolution > 0) {
    occupancy::write_occupancy((fs::path(dir) / "occupancy.occg").string(), result.grid, false);
  }
}

std::vector<RenderedView> render_views(const Tensor<float>& gaussians, const std::vector<geometry::CameraPose>& poses) {
  diffcore::NoGradGuard guard;
  const gsplat::GaussianSet<float> set{Var<float>::constant(gaussians)};
  std::vector<RenderedView> out;
  for (const auto& pose : poses) {
    auto r = gsplat::render(set, pose);
    out.push_back({r.image.value(), r.alpha.value(), r.depth.value()});
  }
  return out;
}

ImageScores score_images(const std::vector<Tensor<float>>& pred, const std::vector<Tensor<float>>& target,
                         std::uint64_t proxy_seed) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("score_images: mismatched image lists");
  diffcore::NoGradGuard guard;
  const losses::PerceptualProxy<float> proxy(proxy_seed);
  ImageScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s.psnr += losses::psnr(pred[i], target[i]);
    s.ssim += losses::ssim(pred[i], target[i]);
    s.perc_proxy += proxy(Var<float>::constant(pred[i]), Var<float>::constant(target[i])).value().item();
  }
  const double n = static_cast<double>(pred.size());
  s.psnr /= n;
  s.ssim /= n;
  s.perc_proxy /= n;
  return s;
}

losses::PointSet sample_gaussian_centers(const Tensor<float>& gaussians, std::size_t n, std::uint64_t seed) {
  const int g = gaussians.rank() == 2 ? gaussians.dim(0) : 0;
  losses::PointSet out;
  if (g == 0 || n == 0) return out;
  std::vector<double> cdf(static_cast<std::size_t>(g));
  double acc = 0;
  for (int i = 0; i < g; ++i) {
    acc += std::max(0.0f, gaussians[static_cast<std::size_t>(i) * gsplat::kGaussianDim + gsplat::kOpacity]);
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  if (!(acc > 0)) return out;
  std::mt19937_64 rng(seed);
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), g - 1));
    const float* row = gaussians.data() + i * gsplat::kGaussianDim + gsplat::kCenter;
    out.emplace_back(row[0], row[1], row[2]);
  }
  return out;
}

std::vector<losses::MetricsRow> evaluate(const Reconstructor& model, const std::vector<SceneRecord>& scenes,
                                         const EvalOptions& opt) {
  if (!opt.gt_anchors && !model.has_proposal()) throw IoError("evaluation needs a stage-one checkpoint");
  const auto& cfg = model.recon_config();
  std::vector<losses::MetricsRow> rows;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const auto& rec = scenes[si];
    const int total = static_cast<int>(rec.views.size());
    Tensor<float> gt_anchors;
    if (opt.gt_anchors) gt_anchors = occupancy::select_anchors<float>(scene_occupancy(rec, cfg.fine), 0.5f, opt.max_tokens);
    losses::PointSet surface;
    if (opt.points > 0) surface = scenegen::sample_surface(rec.scene, opt.points, opt.seed * 977 + si);
    for (int n : opt.input_views) {
      const auto split = eval_split(total, opt.held_out, n);
      std::vector<Tensor<float>> images;
      std::vector<geometry::CameraPose> poses;
      for (int i : split.inputs) {
        images.push_back(rec.views[static_cast<std::size_t>(i)].rgb);
        poses.push_back(rec.views[static_cast<std::size_t>(i)].pose);
      }
      const auto result = opt.gt_anchors ? model.reconstruct(images, poses, gt_anchors)
                                         : model.infer(images, poses, opt.max_tokens);
      std::vector<geometry::CameraPose> held_poses;
      std::vector<Tensor<float>> targets, preds;
      for (int i : split.held_out) {
        held_poses.push_back(rec.views[static_cast<std::size_t>(i)].pose);
        targets.push_back(rec.views[static_cast<std::size_t>(i)].rgb);
      }
      for (auto& v : render_views(result.gaussians, held_poses)) preds.push_back(std::move(v.image));
      const auto scores = score_images(preds, targets, cfg.proxy_seed);
      losses::MetricsRow row;
      row.scene = rec.name;
      row.n_input_views = n;
      row.psnr = scores.psnr;
      row.ssim = scores.ssim;
      row.perc_proxy = scores.perc_proxy;
      if (opt.points > 0) {
        const auto pts = sample_gaussian_centers(result.gaussians, opt.points, opt.seed * 131 + si);
        row.chamfer = losses::chamfer(pts, surface);
        row.fscore = losses::fscore(pts, surface);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

double mean_psnr(const std::vector<losses::MetricsRow>& rows, int n_input_views) {
  double s = 0;
  int c = 0;
  for (const auto& r : rows) {
    if (r.n_input_views == n_input_views) {
      s += r.psnr;
      ++c;
    }
  }
  if (c == 0) throw ShapeError("mean_psnr: no rows for " + std::to_string(n_input_views) + " views");
  return s / c;
}

}  // namespace georecon::pipeline
