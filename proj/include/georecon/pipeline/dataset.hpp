// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "georecon/occupancy/occupancy.hpp"
#include "georecon/scenegen/bundle_io.hpp"

namespace georecon::pipeline {

// On disk:
//   <root>/train/scene_0000/{rgb_*.png, depth_*.bin, mask_*.png, poses.jsonl,
//                            scene.json, occupancy_<res>.occg}
//   <root>/eval/scene_0000/...
struct GenConfig {
  int train_scenes = 100;
  int eval_scenes = 20;
  int views_per_scene = 16;
  int resolution = 64;
  int primitives = 8;
  std::vector<int> occupancy_resolutions{128, 32};
  std::uint64_t seed = 0;
};

/// Image size used to render occupancy GT at `resolution` (4 px per voxel
/// of grid extent, at least 64).
int occupancy_image_resolution(int resolution);

std::uint64_t scene_seed(std::uint64_t base, bool eval, int index);
std::string scene_dir_name(int index);

void generate_dataset(const std::string& root, const GenConfig& cfg);

struct SceneRecord {
  std::string name;
  std::string dir;
  scenegen::SyntheticScene scene;
  std::vector<scenegen::ViewBundle> views;
};

/// Loads every scene directory of a split ("train" or "eval"), sorted by name.
std::vector<SceneRecord> load_split(const std::string& root, const std::string& split, int max_scenes = 0);

/// Occupancy GT of a scene at `resolution`: the cached file when present,
/// otherwise computed from scene.json and written back.
occupancy::OccupancyGrid scene_occupancy(const SceneRecord& rec, int resolution);

/// Fixed held-out / input split of an evaluation scene: `held_out` views
/// evenly spaced over the rig, inputs spread evenly over the rest.
struct EvalSplit {
  std::vector<int> held_out;
  std::vector<int> inputs;
};
EvalSplit eval_split(int total_views, int held_out, int n_inputs);

/// One training sample: views_total distinct views of which the first
/// n_inputs are inputs.
struct ViewSample {
  std::vector<int> views;
  int n_inputs = 0;
};
ViewSample sample_views(int available, int views_total, int min_inputs, int max_inputs, std::mt19937_64& rng);

}  // namespace georecon::pipeline
