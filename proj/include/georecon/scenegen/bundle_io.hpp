// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "georecon/scenegen/render.hpp"

namespace georecon::scenegen {

struct SceneData {
  std::optional<SyntheticScene> scene;  // present when scene.json exists
  std::vector<ViewBundle> views;
};

/// Writes poses.jsonl, rgb_###.png, depth_###.bin, mask_###.png and, when
/// given, scene.json into `dir` (created if missing).
void write_scene_dir(const std::string& dir, const std::vector<ViewBundle>& views,
                     const SyntheticScene* scene = nullptr);
SceneData read_scene_dir(const std::string& dir);

}  // namespace georecon::scenegen
