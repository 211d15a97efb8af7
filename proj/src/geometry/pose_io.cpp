// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/geometry/pose_io.hpp"

#include <fstream>
#include <json.hpp>

#include "georecon/errors.hpp"

namespace georecon::geometry {

using nlohmann::json;

std::string pose_to_json_line(const CameraPose& pose) {
  json j;
  j["fx"] = pose.K.fx;
  j["fy"] = pose.K.fy;
  j["cx"] = pose.K.cx;
  j["cy"] = pose.K.cy;
  j["width"] = pose.K.width;
  j["height"] = pose.K.height;
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[static_cast<std::size_t>(i * 3 + k)] = pose.T.R(i, k);
  }
  j["R"] = r;
  j["t"] = {pose.T.t.x(), pose.T.t.y(), pose.T.t.z()};
  return j.dump();
}

CameraPose pose_from_json_line(const std::string& line) {
  CameraPose pose;
  try {
    const json j = json::parse(line);
    pose.K.fx = j.at("fx").get<double>();
    pose.K.fy = j.at("fy").get<double>();
    pose.K.cx = j.at("cx").get<double>();
    pose.K.cy = j.at("cy").get<double>();
    pose.K.width = j.at("width").get<int>();
    pose.K.height = j.at("height").get<int>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw IoError("pose record: R needs 9 values and t 3");
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) pose.T.R(i, k) = r[static_cast<std::size_t>(i * 3 + k)];
      pose.T.t[i] = t[static_cast<std::size_t>(i)];
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed pose record: ") + e.what());
  }
  validate(pose);
  return pose;
}

void write_poses(const std::string& path, const std::vector<CameraPose>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (const auto& p : poses) out << pose_to_json_line(p) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<CameraPose> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<CameraPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    poses.push_back(pose_from_json_line(line));
  }
  return poses;
}

}  // namespace georecon::geometry
