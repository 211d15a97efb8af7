// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "georecon/errors.hpp"
#include "georecon/losses/losses.hpp"

namespace georecon::losses {

using diffcore::Shape;

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape() || a.size() == 0) throw ShapeError("psnr: shape mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0) return kMaxPsnr;
  return std::min(kMaxPsnr, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape() || a.rank() != 3) throw ShapeError("ssim: expected matching [H, W, C] images");
  const int h = a.dim(0), w = a.dim(1), c = a.dim(2);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  if (h < kWin || w < kWin) throw ShapeError("ssim: image smaller than the 11 x 11 window");
  double win[kWin];
  double wsum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    win[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    wsum += win[i];
  }
  for (double& v : win) v /= wsum;

  double total = 0;
  long count = 0;
  for (int ch = 0; ch < c; ++ch) {
    auto px = [&](const Tensor<float>& t, int y, int x) {
      return static_cast<double>(t[(static_cast<std::size_t>(y) * w + x) * c + ch]);
    };
    for (int y = 0; y + kWin <= h; ++y) {
      for (int x = 0; x + kWin <= w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < kWin; ++dy) {
          for (int dx = 0; dx < kWin; ++dx) {
            const double k = win[dy] * win[dx];
            const double va = px(a, y + dy, x + dx), vb = px(b, y + dy, x + dx);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

namespace {

// Mean distance from each point of p to its nearest neighbour in q, and the
// fraction of p within tau.
std::pair<double, double> directed(const PointSet& p, const PointSet& q, double tau) {
  double sum = 0;
  std::size_t within = 0;
  for (const auto& x : p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : q) best = std::min(best, (x - y).squaredNorm());
    const double d = std::sqrt(best);
    sum += d;
    within += d <= tau;
  }
  return {sum / static_cast<double>(p.size()), static_cast<double>(within) / static_cast<double>(p.size())};
}

void require_points(const PointSet& p, const PointSet& q, const char* what) {
  if (p.empty() || q.empty()) throw ShapeError(std::string(what) + ": empty point set");
}

}  // namespace

double chamfer(const PointSet& p, const PointSet& q) {
  require_points(p, q, "chamfer");
  return 0.5 * (directed(p, q, 0).first + directed(q, p, 0).first);
}

double fscore(const PointSet& p, const PointSet& q, double tau) {
  require_points(p, q, "fscore");
  const double precision = directed(p, q, tau).second;
  const double recall = directed(q, p, tau).second;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

std::string to_json_line(const MetricsRow& row) {
  nlohmann::ordered_json j;
  j["scene"] = row.scene;
  j["n_input_views"] = row.n_input_views;
  j["psnr"] = row.psnr;
  j["ssim"] = row.ssim;
  j["perc_proxy"] = row.perc_proxy;
  j["chamfer"] = row.chamfer;
  j["fscore"] = row.fscore;
  return j.dump();
}

MetricsRow metrics_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRow row;
    row.scene = j.at("scene").get<std::string>();
    row.n_input_views = j.at("n_input_views").get<int>();
    row.psnr = j.at("psnr").get<double>();
    row.ssim = j.at("ssim").get<double>();
    row.perc_proxy = j.at("perc_proxy").get<double>();
    row.chamfer = j.at("chamfer").get<double>();
    row.fscore = j.at("fscore").get<double>();
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad metrics line: ") + e.what());
  }
}

void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : rows) out << to_json_line(r) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(metrics_from_json_line(line));
  }
  return rows;
}

}  // namespace georecon::losses
