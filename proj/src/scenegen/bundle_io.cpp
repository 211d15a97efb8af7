// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/scenegen/bundle_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "georecon/errors.hpp"
#include "georecon/geometry/pose_io.hpp"
#include "georecon/io/image.hpp"

namespace georecon::scenegen {

namespace fs = std::filesystem;

namespace {

std::string indexed(const std::string& dir, const char* stem, std::size_t i, const char* ext) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%03zu.%s", stem, i, ext);
  return (fs::path(dir) / name).string();
}

}  // namespace

void write_scene_dir(const std::string& dir, const std::vector<ViewBundle>& views, const SyntheticScene* scene) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  std::vector<geometry::CameraPose> poses;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    poses.push_back(v.pose);
    io::write_png(indexed(dir, "rgb", i, "png"), v.rgb);
    io::write_depth(indexed(dir, "depth", i, "bin"), v.depth);
    io::write_png(indexed(dir, "mask", i, "png"), v.mask.reshaped({v.mask.dim(0), v.mask.dim(1), 1}));
  }
  geometry::write_poses((fs::path(dir) / "poses.jsonl").string(), poses);
  if (scene) {
    std::ofstream out(fs::path(dir) / "scene.json");
    if (!out) throw IoError("cannot write scene.json in " + dir);
    out << scene_to_json(*scene) << '\n';
  }
}

SceneData read_scene_dir(const std::string& dir) {
  const auto poses_path = fs::path(dir) / "poses.jsonl";
  if (!fs::exists(poses_path)) throw IoError("missing " + poses_path.string());
  SceneData data;
  const auto poses = geometry::read_poses(poses_path.string());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    ViewBundle v;
    v.pose = poses[i];
    v.rgb = io::read_png(indexed(dir, "rgb", i, "png"), 3);
    v.depth = io::read_depth(indexed(dir, "depth", i, "bin"));
    auto mask = io::read_png(indexed(dir, "mask", i, "png"), 1);
    v.mask = mask.reshaped({mask.dim(0), mask.dim(1)});
    const diffcore::Shape hw{v.pose.K.height, v.pose.K.width};
    if (v.depth.shape() != hw || v.mask.shape() != hw || v.rgb.dim(0) != hw[0] || v.rgb.dim(1) != hw[1]) {
      throw IoError("view " + std::to_string(i) + " in " + dir + " does not match its pose resolution");
    }
    data.views.push_back(std::move(v));
  }
  const auto scene_path = fs::path(dir) / "scene.json";
  if (fs::exists(scene_path)) {
    std::ifstream in(scene_path);
    std::stringstream ss;
    ss << in.rdbuf();
    data.scene = scene_from_json(ss.str());
  }
  return data;
}

}  // namespace georecon::scenegen
