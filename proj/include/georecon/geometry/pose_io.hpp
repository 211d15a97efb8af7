// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "georecon/geometry/camera.hpp"

namespace georecon::geometry {

// One JSON object per line:
// {"fx":..,"fy":..,"cx":..,"cy":..,"width":..,"height":..,"R":[9 row-major],"t":[3]}
std::string pose_to_json_line(const CameraPose& pose);
CameraPose pose_from_json_line(const std::string& line);

void write_poses(const std::string& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> read_poses(const std::string& path);

}  // namespace georecon::geometry
