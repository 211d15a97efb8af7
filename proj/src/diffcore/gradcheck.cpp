// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace georecon::diffcore {

namespace {

double projected(const Var<double>& out, const Tensor<double>& proj) {
  double acc = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i) acc += proj[i] * out.value()[i];
  return acc;
}

}  // namespace

GradCheckReport grad_check_leaves(const std::string& op_name, const std::function<Var<double>()>& fn,
                                  const std::vector<Var<double>>& leaves, const GradCheckOptions& options) {
  GradCheckReport report;
  report.op_name = op_name;
  auto is_diff = [&](std::size_t i) {
    return options.differentiable.empty() || (i < options.differentiable.size() && options.differentiable[i]);
  };

  for (auto leaf : leaves) leaf.zero_grad();
  Var<double> out = fn();
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<double> proj(out.shape());
  for (auto& v : proj.vec()) v = normal(rng);
  backward(out, &proj);

  std::vector<Tensor<double>> snapshot;
  snapshot.reserve(leaves.size());
  for (const auto& leaf : leaves) snapshot.push_back(leaf.value());

  struct Entry {
    std::size_t flat;
    double analytic, numeric;
  };
  std::vector<Entry> entries;
  std::size_t flat_base = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Var<double> leaf = leaves[i];
    const std::size_t n = leaf.size();
    if (!is_diff(i)) {
      flat_base += n;
      continue;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_input && n > options.max_entries_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_input);
      std::sort(idx.begin(), idx.end());
    }
    const Tensor<double> grad = leaf.grad_or_empty();
    for (std::size_t j : idx) {
      if (options.skip && options.skip(i, j, snapshot)) {
        ++report.skipped;
        continue;
      }
      const double analytic = grad.size() == n ? grad[j] : 0.0;
      const double orig = leaf.value()[j];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        leaf.mutable_value()[j] = orig + options.eps;
        plus = projected(fn(), proj);
        leaf.mutable_value()[j] = orig - options.eps;
        minus = projected(fn(), proj);
        leaf.mutable_value()[j] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * options.eps);
      if (!std::isfinite(numeric)) throw NumericError(op_name + ": non-finite finite difference");
      entries.push_back({flat_base + j, analytic, numeric});
    }
    flat_base += n;
  }

  double scale = 0.0;
  for (const auto& e : entries) scale = std::max({scale, std::abs(e.numeric), std::abs(e.analytic)});
  const double floor = std::max(options.floor_fraction * scale, 1e-12);
  for (const auto& e : entries) {
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    const double rel = std::abs(e.analytic - e.numeric) / denom;
    if (rel >= report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = e.flat;
    }
    ++report.checked;
  }
  if (report.skipped) {
    report.notes.push_back(std::to_string(report.skipped) + " entries skipped at non-smooth points");
  }
  for (auto leaf : leaves) leaf.zero_grad();
  return report;
}

GradCheckReport grad_check(const std::string& op_name, const GradFn& fn,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& options) {
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const bool diff = options.differentiable.empty() ||
                      (i < options.differentiable.size() && options.differentiable[i]);
    leaves.push_back(Var<double>::leaf(inputs[i], diff));
  }
  return grad_check_leaves(op_name, [&] { return fn(leaves); }, leaves, options);
}

std::function<bool(std::size_t, std::size_t, const std::vector<Tensor<double>>&)>
skip_integer_coordinates(std::size_t coordinate_input, double tol) {
  return [coordinate_input, tol](std::size_t input, std::size_t index, const std::vector<Tensor<double>>& in) {
    if (input != coordinate_input) return false;
    const double v = in[input][index];
    return std::abs(v - std::round(v)) < tol;
  };
}

}  // namespace georecon::diffcore
