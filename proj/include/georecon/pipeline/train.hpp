// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "georecon/losses/losses.hpp"
#include "georecon/pipeline/checkpoint.hpp"
#include "georecon/pipeline/config.hpp"
#include "georecon/pipeline/dataset.hpp"

namespace georecon::pipeline {

struct StepLog {
  long step = 0;
  int scene = 0;
  int n_inputs = 0;
  std::size_t tokens = 0;
  double loss = 0;
  double grad_norm = 0;     // before clipping
  double clipped_norm = 0;  // after clipping
  double lr = 0;
  losses::LossBreakdown parts;  // stage two only
};

std::string to_json_line(const StepLog& row);

struct TrainOptions {
  std::string out_dir;  // empty: write nothing
  const Checkpoint* resume = nullptr;
  long stop_after = -1;  // stop once this many steps are done (< 0: run to the end)
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

long total_steps(const TrainConfig& cfg, std::size_t n_scenes);

/// Proposal network against occupancy GT. Writes config.txt,
/// train_log.jsonl and stage1.ckpt into out_dir.
TrainResult train_stage1(const TrainConfig& cfg, const std::vector<SceneRecord>& scenes, const TrainOptions& opt = {});
/// Reconstruction network against rendered views; anchors come from GT
/// occupancy or from a stage-one checkpoint (cfg.anchors).
TrainResult train_stage2(const TrainConfig& cfg, const std::vector<SceneRecord>& scenes, const TrainOptions& opt = {});

/// Loads the training split and dispatches on cfg.stage.
TrainResult train(const TrainConfig& cfg, const std::string& data_dir, const TrainOptions& opt = {});

}  // namespace georecon::pipeline
