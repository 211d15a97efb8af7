// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "georecon/errors.hpp"

namespace georecon::pipeline {

namespace fs = std::filesystem;

int occupancy_image_resolution(int resolution) { return std::max(64, 4 * resolution); }

std::uint64_t scene_seed(std::uint64_t base, bool eval, int index) {
  // Disjoint streams for the two splits.
  return base * 1000003ULL + (eval ? 500000ULL : 0ULL) + static_cast<std::uint64_t>(index);
}

std::string scene_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

namespace {

std::string occupancy_path(const std::string& dir, int resolution) {
  return (fs::path(dir) / ("occupancy_" + std::to_string(resolution) + ".occg")).string();
}

void generate_split(const std::string& root, const std::string& split, int count, const GenConfig& cfg) {
  const auto poses = scenegen::default_rig(cfg.views_per_scene, cfg.resolution);
  for (int i = 0; i < count; ++i) {
    const auto scene = scenegen::generate_scene(scene_seed(cfg.seed, split == "eval", i), cfg.primitives);
    std::vector<scenegen::ViewBundle> views;
    views.reserve(poses.size());
    for (const auto& pose : poses) views.push_back(scenegen::render_reference(scene, pose));
    const std::string dir = (fs::path(root) / split / scene_dir_name(i)).string();
    scenegen::write_scene_dir(dir, views, &scene);
    for (int res : cfg.occupancy_resolutions) {
      const auto grid = occupancy::occupancy_from_scene(scene, res, 36, occupancy_image_resolution(res));
      occupancy::write_occupancy(occupancy_path(dir, res), grid, true);
    }
  }
}

}  // namespace

void generate_dataset(const std::string& root, const GenConfig& cfg) {
  if (cfg.train_scenes < 0 || cfg.eval_scenes < 0) throw ShapeError("gen-data: scene counts must be nonnegative");
  if (cfg.views_per_scene < 2) throw ShapeError("gen-data: need at least two views per scene");
  for (int res : cfg.occupancy_resolutions) {
    if (res < 2 || res % 2 != 0) throw ShapeError("gen-data: occupancy resolutions must be even");
  }
  generate_split(root, "train", cfg.train_scenes, cfg);
  generate_split(root, "eval", cfg.eval_scenes, cfg);
}

std::vector<SceneRecord> load_split(const std::string& root, const std::string& split, int max_scenes) {
  const fs::path base = fs::path(root) / split;
  if (!fs::is_directory(base)) throw IoError("missing dataset split " + base.string());
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(base)) {
    if (entry.is_directory()) dirs.push_back(entry.path().filename().string());
  }
  std::sort(dirs.begin(), dirs.end());
  if (max_scenes > 0 && static_cast<int>(dirs.size()) > max_scenes) dirs.resize(static_cast<std::size_t>(max_scenes));
  if (dirs.empty()) throw IoError("no scenes in " + base.string());
  std::vector<SceneRecord> out;
  for (const auto& name : dirs) {
    SceneRecord rec;
    rec.name = name;
    rec.dir = (base / name).string();
    auto data = scenegen::read_scene_dir(rec.dir);
    if (!data.scene) throw IoError("scene " + rec.dir + " has no scene.json");
    rec.scene = *data.scene;
    rec.views = std::move(data.views);
    out.push_back(std::move(rec));
  }
  return out;
}

occupancy::OccupancyGrid scene_occupancy(const SceneRecord& rec, int resolution) {
  const std::string path = occupancy_path(rec.dir, resolution);
  if (fs::exists(path)) {
    auto grid = occupancy::read_occupancy(path);
    if (grid.resolution != resolution) throw IoError(path + " has the wrong resolution");
    return grid;
  }
  auto grid = occupancy::occupancy_from_scene(rec.scene, resolution, 36, occupancy_image_resolution(resolution));
  occupancy::write_occupancy(path, grid, true);
  return grid;
}

EvalSplit eval_split(int total_views, int held_out, int n_inputs) {
  if (held_out < 1 || held_out >= total_views) throw ShapeError("eval_split: bad held-out count");
  EvalSplit s;
  std::vector<bool> taken(static_cast<std::size_t>(total_views), false);
  for (int k = 0; k < held_out; ++k) {
    const int idx = k * total_views / held_out;
    s.held_out.push_back(idx);
    taken[static_cast<std::size_t>(idx)] = true;
  }
  std::vector<int> rest;
  for (int i = 0; i < total_views; ++i) {
    if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);
  }
  const int r = static_cast<int>(rest.size());
  if (n_inputs < 1 || n_inputs > r) {
    throw ShapeError("eval_split: " + std::to_string(n_inputs) + " inputs requested, " + std::to_string(r) +
                     " views available");
  }
  for (int k = 0; k < n_inputs; ++k) s.inputs.push_back(rest[static_cast<std::size_t>(k * r / n_inputs)]);
  return s;
}

ViewSample sample_views(int available, int views_total, int min_inputs, int max_inputs, std::mt19937_64& rng) {
  if (views_total > available) {
    throw ShapeError("sample_views: scene has " + std::to_string(available) + " views, need " +
                     std::to_string(views_total));
  }
  if (min_inputs < 1 || max_inputs > views_total || min_inputs > max_inputs) {
    throw ShapeError("sample_views: bad input range");
  }
  std::vector<int> idx(static_cast<std::size_t>(available));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates with explicit draws, independent of the standard
  // library's shuffle algorithm.
  for (int i = 0; i < views_total; ++i) {
    const auto span = static_cast<std::uint64_t>(available - i);
    const int j = i + static_cast<int>(rng() % span);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  ViewSample s;
  s.views.assign(idx.begin(), idx.begin() + views_total);
  const auto range = static_cast<std::uint64_t>(max_inputs - min_inputs + 1);
  s.n_inputs = min_inputs + static_cast<int>(rng() % range);
  return s;
}

}  // namespace georecon::pipeline
