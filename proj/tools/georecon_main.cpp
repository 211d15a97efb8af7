// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

// georecon command line: data generation, training, inference, rendering,
// evaluation and the gradient suite.
//
// Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 I/O error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "georecon/errors.hpp"
#include "georecon/geometry/pose_io.hpp"
#include "georecon/io/image.hpp"
#include "georecon/pipeline/checkpoint.hpp"
#include "georecon/pipeline/dataset.hpp"
#include "georecon/pipeline/gradient_suite.hpp"
#include "georecon/pipeline/infer.hpp"
#include "georecon/pipeline/train.hpp"

namespace fs = std::filesystem;
using namespace georecon;
using namespace georecon::pipeline;

namespace {

std::string numbered(const std::string& dir, const char* stem, std::size_t i, const char* ext) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%03zu.%s", stem, i, ext);
  return (fs::path(dir) / name).string();
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ShapeError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  // The environment wins over both the file and --set.
  apply_seed_override(cfg);
  cfg.validate();
  return cfg;
}

std::vector<int> pick_views(std::size_t available, const std::vector<int>& requested) {
  std::vector<int> out;
  if (requested.empty()) {
    for (std::size_t i = 0; i < available; ++i) out.push_back(static_cast<int>(i));
    return out;
  }
  for (int i : requested) {
    if (i < 0 || static_cast<std::size_t>(i) >= available) throw ShapeError("view index out of range: " + std::to_string(i));
    out.push_back(i);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"georecon: sparse-view 3D reconstruction with occupancy proposals and Gaussian splats"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic scenes, reference views and occupancy GT");
  GenConfig gcfg;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Dataset root")->required();
  gen->add_option("--train", gcfg.train_scenes, "Training scenes")->capture_default_str();
  gen->add_option("--eval", gcfg.eval_scenes, "Held-out scenes")->capture_default_str();
  gen->add_option("--views", gcfg.views_per_scene, "Views per scene")->capture_default_str();
  gen->add_option("--resolution", gcfg.resolution, "Image size in pixels")->capture_default_str();
  gen->add_option("--primitives", gcfg.primitives, "Primitives per scene")->capture_default_str();
  gen->add_option("--occupancy-res", gcfg.occupancy_resolutions, "Occupancy GT resolutions")
      ->delimiter(',')
      ->capture_default_str();
  gen->add_option("--seed", gcfg.seed, "Base seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train stage 1 (proposal) or stage 2 (reconstruction)");
  int stage = 0;
  std::string config_path, data_dir, train_out, resume_path;
  std::vector<std::string> overrides;
  tr->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--set", overrides, "Override one config key (key=value), repeatable");
  tr->add_option("--data", data_dir, "Dataset root")->required();
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--resume", resume_path, "Checkpoint to continue from");

  // infer
  auto* inf = app.add_subcommand("infer", "Reconstruct Gaussians from posed images");
  std::string ck1, ck2, scene_dir, infer_out;
  std::vector<int> infer_views;
  std::size_t infer_tokens = 0;
  inf->add_option("--stage1", ck1, "Stage-1 checkpoint")->required();
  inf->add_option("--stage2", ck2, "Stage-2 checkpoint")->required();
  inf->add_option("--scene", scene_dir, "Directory with rgb_*.png and poses.jsonl")->required();
  inf->add_option("--views", infer_views, "View indices to use (default all)")->delimiter(',');
  inf->add_option("--max-tokens", infer_tokens, "Anchor cap (default from the stage-2 config)");
  inf->add_option("--out", infer_out, "Output directory")->required();

  // render
  auto* ren = app.add_subcommand("render", "Render a Gaussian file at the given poses");
  std::string gauss_path, poses_path, render_out;
  ren->add_option("--gaussians", gauss_path, "Gaussian file")->required();
  ren->add_option("--poses", poses_path, "poses.jsonl")->required();
  ren->add_option("--out", render_out, "Output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate on held-out scenes");
  std::string eval_ck1, eval_ck2, eval_data, eval_out;
  EvalOptions eopt;
  int eval_scenes = 0;
  ev->add_option("--stage1", eval_ck1, "Stage-1 checkpoint (not needed with --gt-anchors)");
  ev->add_option("--stage2", eval_ck2, "Stage-2 checkpoint")->required();
  ev->add_option("--data", eval_data, "Dataset root")->required();
  ev->add_option("--views", eopt.input_views, "Input-view counts")->delimiter(',')->capture_default_str();
  ev->add_option("--points", eopt.points, "Points for chamfer / F-score (0 skips)")->capture_default_str();
  ev->add_option("--max-tokens", eopt.max_tokens, "Anchor cap")->capture_default_str();
  ev->add_option("--max-scenes", eval_scenes, "Use only the first N held-out scenes");
  ev->add_flag("--gt-anchors", eopt.gt_anchors, "Use GT occupancy instead of stage-1 proposals");
  ev->add_option("--out", eval_out, "Metrics JSONL path")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  int seeds = 3;
  gc->add_option("--seeds", seeds, "Random draws per check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      generate_dataset(gen_out, gcfg);
      std::cout << "wrote " << gcfg.train_scenes << " train and " << gcfg.eval_scenes << " eval scenes to " << gen_out
                << "\n";
    } else if (tr->parsed()) {
      TrainConfig cfg = resolve_config(config_path, overrides);
      cfg.stage = stage;
      std::optional<Checkpoint> resume;
      if (!resume_path.empty()) resume = load_checkpoint(resume_path);
      TrainOptions opt;
      opt.out_dir = train_out;
      opt.resume = resume ? &*resume : nullptr;
      opt.on_step = [](const StepLog& row) {
        if (row.step % 10 == 0) std::cout << to_json_line(row) << "\n" << std::flush;
      };
      const auto result = train(cfg, data_dir, opt);
      std::cout << "trained " << result.checkpoint.step << " steps; checkpoint in " << train_out << "\n";
    } else if (inf->parsed()) {
      const Checkpoint c1 = load_checkpoint(ck1);
      const Checkpoint c2 = load_checkpoint(ck2);
      const Reconstructor model(&c1, c2);
      const auto data = scenegen::read_scene_dir(scene_dir);
      std::vector<diffcore::Tensor<float>> images;
      std::vector<geometry::CameraPose> poses;
      for (int i : pick_views(data.views.size(), infer_views)) {
        images.push_back(data.views[static_cast<std::size_t>(i)].rgb);
        poses.push_back(data.views[static_cast<std::size_t>(i)].pose);
      }
      const std::size_t cap = infer_tokens > 0 ? infer_tokens : model.recon_config().max_tokens_infer;
      const auto result = model.infer(images, poses, cap);
      write_inference(infer_out, result);
      std::cout << result.anchors.dim(0) << " anchors, " << result.gaussians.dim(0) << " Gaussians written to "
                << infer_out << "\n";
    } else if (ren->parsed()) {
      const auto gaussians = gsplat::read_gaussians(gauss_path);
      const auto poses = geometry::read_poses(poses_path);
      const auto views = render_views(gaussians, poses);
      fs::create_directories(render_out);
      for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& v = views[i];
        io::write_png(numbered(render_out, "rgb", i, "png"), v.image);
        io::write_png(numbered(render_out, "alpha", i, "png"), v.alpha.reshaped({v.alpha.dim(0), v.alpha.dim(1), 1}));
        io::write_depth(numbered(render_out, "depth", i, "bin"), v.depth);
      }
      std::cout << "rendered " << views.size() << " views to " << render_out << "\n";
    } else if (ev->parsed()) {
      std::optional<Checkpoint> c1;
      if (!eval_ck1.empty()) c1 = load_checkpoint(eval_ck1);
      const Checkpoint c2 = load_checkpoint(eval_ck2);
      const Reconstructor model(c1 ? &*c1 : nullptr, c2);
      const auto scenes = load_split(eval_data, "eval", eval_scenes);
      const auto rows = evaluate(model, scenes, eopt);
      losses::write_metrics(eval_out, rows);
      for (int n : eopt.input_views) std::cout << n << " views: mean PSNR " << mean_psnr(rows, n) << "\n";
    } else if (gc->parsed()) {
      int failed = 0;
      run_gradient_suite(seeds, [&](const SuiteEntry& e) {
        std::cout << format_suite_entry(e) << "\n" << std::flush;
        if (!e.passed()) ++failed;
      });
      std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " checks failed") << "\n";
      return failed == 0 ? 0 : 2;
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
