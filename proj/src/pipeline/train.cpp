// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "georecon/errors.hpp"
#include "georecon/gsplat/render.hpp"
#include "georecon/pipeline/model.hpp"

namespace georecon::pipeline {

namespace fs = std::filesystem;
using diffcore::Tensor;
using diffcore::Var;

std::string to_json_line(const StepLog& row) {
  nlohmann::json j = {{"step", row.step},         {"scene", row.scene},
                      {"n_inputs", row.n_inputs}, {"tokens", row.tokens},
                      {"loss", row.loss},         {"grad_norm", row.grad_norm},
                      {"clipped_norm", row.clipped_norm}, {"lr", row.lr}};
  if (row.parts.total != 0.0) {
    j["img_l2"] = row.parts.img_l2;
    j["img_perc"] = row.parts.img_perc;
    j["mask"] = row.parts.mask;
    j["depth"] = row.parts.depth;
  }
  return j.dump();
}

long total_steps(const TrainConfig& cfg, std::size_t n_scenes) {
  if (cfg.steps > 0) return cfg.steps;
  return static_cast<long>(cfg.epochs) * static_cast<long>(n_scenes);
}

namespace {

// One forward/backward pass on a sampled scene; returns its log entry.
using MicroStep = std::function<StepLog(std::mt19937_64&)>;

std::uint64_t sampler_seed(const TrainConfig& cfg, int stage) {
  return cfg.seed * 6151ULL + static_cast<std::uint64_t>(stage) * 12289ULL + 3ULL;
}

void check_finite(double loss, long step, int scene) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(step) + " (scene " + std::to_string(scene) + ")");
  }
}

TrainResult run_loop(const TrainConfig& cfg, diffcore::ParamStore<float>& store, std::size_t n_scenes,
                     const MicroStep& micro, const TrainOptions& opt) {
  AdamW adam(store, {cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  std::mt19937_64 rng(sampler_seed(cfg, cfg.stage));
  long step = 0;
  if (opt.resume != nullptr) {
    if (parse_config(opt.resume->config).stage != cfg.stage) throw ShapeError("resume: checkpoint is from another stage");
    restore_params(*opt.resume, store);
    restore_optimizer(*opt.resume, adam);
    std::istringstream(opt.resume->rng_state) >> rng;
    step = static_cast<long>(opt.resume->step);
  }
  const long total = total_steps(cfg, n_scenes);
  const long stop = opt.stop_after >= 0 ? std::min(opt.stop_after, total) : total;

  std::ofstream log_file;
  if (!opt.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create " + opt.out_dir + ": " + ec.message());
    save_config((fs::path(opt.out_dir) / "config.txt").string(), cfg);
    log_file.open(fs::path(opt.out_dir) / "train_log.jsonl", opt.resume ? std::ios::app : std::ios::trunc);
    if (!log_file) throw IoError("cannot write the training log in " + opt.out_dir);
  }

  TrainResult result;
  const double inv_acc = 1.0 / cfg.accumulation;
  while (step < stop) {
    store.zero_grad();
    StepLog row;
    for (int a = 0; a < cfg.accumulation; ++a) {
      StepLog m = micro(rng);
      check_finite(m.loss, step, m.scene);
      row.scene = m.scene;
      row.n_inputs = m.n_inputs;
      row.tokens = m.tokens;
      row.loss += m.loss * inv_acc;
      row.parts.total += m.parts.total * inv_acc;
      row.parts.img_l2 += m.parts.img_l2 * inv_acc;
      row.parts.img_perc += m.parts.img_perc * inv_acc;
      row.parts.mask += m.parts.mask * inv_acc;
      row.parts.depth += m.parts.depth * inv_acc;
    }
    if (cfg.accumulation > 1) scale_grads(store, inv_acc);
    row.grad_norm = clip_grad_norm(store, cfg.grad_clip);
    row.clipped_norm = grad_norm(store);
    row.lr = cosine_lr(step, total, cfg.warmup, cfg.lr, cfg.min_lr);
    adam.step(row.lr);
    row.step = step;
    ++step;
    if (log_file.is_open()) log_file << to_json_line(row) << '\n' << std::flush;
    if (opt.on_step) opt.on_step(row);
    result.log.push_back(row);
  }

  result.checkpoint = capture_checkpoint(store, &adam);
  result.checkpoint.config = config_to_text(cfg);
  result.checkpoint.step = static_cast<std::uint64_t>(step);
  std::ostringstream rs;
  rs << rng;
  result.checkpoint.rng_state = rs.str();
  if (!opt.out_dir.empty()) {
    save_checkpoint((fs::path(opt.out_dir) / ("stage" + std::to_string(cfg.stage) + ".ckpt")).string(),
                    result.checkpoint);
  }
  return result;
}

struct Inputs {
  std::vector<Tensor<float>> images;
  std::vector<geometry::CameraPose> poses;
};

Inputs gather_inputs(const SceneRecord& rec, const ViewSample& s) {
  Inputs in;
  for (int k = 0; k < s.n_inputs; ++k) {
    const auto& v = rec.views[static_cast<std::size_t>(s.views[static_cast<std::size_t>(k)])];
    in.images.push_back(v.rgb);
    in.poses.push_back(v.pose);
  }
  return in;
}

void check_scenes(const std::vector<SceneRecord>& scenes, const TrainConfig& cfg) {
  if (scenes.empty()) throw IoError("training: no scenes");
  for (const auto& rec : scenes) {
    if (static_cast<int>(rec.views.size()) < cfg.views_total) {
      throw IoError("scene " + rec.name + " has " + std::to_string(rec.views.size()) + " views, need " +
                    std::to_string(cfg.views_total));
    }
    if (rec.views.front().pose.K.width != cfg.resolution || rec.views.front().pose.K.height != cfg.resolution) {
      throw IoError("scene " + rec.name + " resolution does not match the config");
    }
  }
}

}  // namespace

TrainResult train_stage1(const TrainConfig& cfg_in, const std::vector<SceneRecord>& scenes, const TrainOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.stage = 1;
  cfg.validate();
  check_scenes(scenes, cfg);
  ProposalBundle<float> bundle(cfg);
  std::vector<std::optional<Tensor<float>>> targets(scenes.size());

  auto micro = [&](std::mt19937_64& rng) {
    StepLog row;
    row.scene = static_cast<int>(rng() % scenes.size());
    const auto& rec = scenes[static_cast<std::size_t>(row.scene)];
    const auto s = sample_views(static_cast<int>(rec.views.size()), cfg.views_total, cfg.input_count_min(),
                                cfg.input_count_max(), rng);
    auto& target = targets[static_cast<std::size_t>(row.scene)];
    if (!target) target = occupancy::to_token_layout<float>(scene_occupancy(rec, cfg.fine), cfg.coarse);
    const Inputs in = gather_inputs(rec, s);
    auto loss = occupancy::stage1_loss_logits(bundle.model->logits(in.images, in.poses), *target);
    row.loss = loss.value().item();
    row.n_inputs = s.n_inputs;
    row.tokens = static_cast<std::size_t>(target->dim(0));
    if (std::isfinite(row.loss)) diffcore::backward(loss);
    return row;
  };
  return run_loop(cfg, bundle.store, scenes.size(), micro, opt);
}

TrainResult train_stage2(const TrainConfig& cfg_in, const std::vector<SceneRecord>& scenes, const TrainOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.stage = 2;
  cfg.validate();
  check_scenes(scenes, cfg);
  ReconBundle<float> bundle(cfg);
  const losses::PerceptualProxy<float> proxy(cfg.proxy_seed);

  std::unique_ptr<ProposalBundle<float>> proposal;
  if (cfg.anchors == "predicted") {
    const Checkpoint ck1 = load_checkpoint(cfg.stage1_checkpoint);
    const TrainConfig cfg1 = parse_config(ck1.config);
    if (cfg1.fine != cfg.fine) throw ShapeError("stage-one checkpoint uses a different fine resolution");
    proposal = std::make_unique<ProposalBundle<float>>(cfg1);
    restore_params(ck1, proposal->store);
  }
  std::vector<std::optional<Tensor<float>>> gt_anchors(scenes.size());

  auto micro = [&](std::mt19937_64& rng) {
    StepLog row;
    row.scene = static_cast<int>(rng() % scenes.size());
    const auto& rec = scenes[static_cast<std::size_t>(row.scene)];
    const auto s = sample_views(static_cast<int>(rec.views.size()), cfg.views_total, cfg.input_count_min(),
                                cfg.input_count_max(), rng);
    row.n_inputs = s.n_inputs;
    const Inputs in = gather_inputs(rec, s);

    Tensor<float> anchors;
    if (proposal) {
      anchors = occupancy::select_anchors<float>(proposal->model->predict(in.images, in.poses),
                                                 static_cast<float>(cfg.threshold), cfg.max_tokens_train);
    } else {
      auto& cached = gt_anchors[static_cast<std::size_t>(row.scene)];
      if (!cached) cached = occupancy::select_anchors<float>(scene_occupancy(rec, cfg.fine), 0.5f, cfg.max_tokens_train);
      anchors = *cached;
    }
    row.tokens = static_cast<std::size_t>(anchors.dim(0));
    if (row.tokens > cfg.max_tokens_train) throw ShapeError("token cap exceeded");

    const auto gaussians = (*bundle.model)(in.images, in.poses, anchors);
    const int first_target = cfg.supervise_inputs ? 0 : s.n_inputs;
    Var<float> total;
    for (int k = first_target; k < cfg.views_total; ++k) {
      const auto& view = rec.views[static_cast<std::size_t>(s.views[static_cast<std::size_t>(k)])];
      auto vl = losses::view_loss(gsplat::render(gaussians, view.pose), view, proxy);
      row.parts += vl.parts;
      total = total.defined() ? diffcore::add(total, vl.total) : vl.total;
    }
    row.loss = total.value().item();
    if (!row.parts.consistent(1e-5 * std::max(1.0, std::abs(row.parts.total)))) {
      throw NumericError("loss breakdown does not add up at scene " + rec.name);
    }
    if (std::isfinite(row.loss)) diffcore::backward(total);
    return row;
  };
  return run_loop(cfg, bundle.store, scenes.size(), micro, opt);
}

TrainResult train(const TrainConfig& cfg, const std::string& data_dir, const TrainOptions& opt) {
  cfg.validate();
  const auto scenes = load_split(data_dir, "train", cfg.max_scenes);
  return cfg.stage == 1 ? train_stage1(cfg, scenes, opt) : train_stage2(cfg, scenes, opt);
}

}  // namespace georecon::pipeline
