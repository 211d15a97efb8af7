// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "georecon/diffcore/autograd.hpp"

namespace georecon::diffcore {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;  // flat index over the concatenated checked inputs
  std::size_t checked = 0;
  std::size_t skipped = 0;      // entries sitting on a known kink
  std::vector<std::string> notes;

  bool passed(double tol) const { return checked > 0 && max_rel_err < tol; }
};

using GradFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double eps = 1e-4;
  // 0 checks every entry; otherwise a seeded random subset per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
  // Errors are relative to max(|analytic|, |numeric|, floor_fraction * max|numeric|).
  double floor_fraction = 1e-3;
  // Inputs not listed here are held constant (empty means all differentiable).
  std::vector<bool> differentiable;
  // Return true to skip an entry (non-smooth point).
  std::function<bool(std::size_t input, std::size_t index, const std::vector<Tensor<double>>&)> skip;
};

/// Compares the analytic vector-Jacobian product of `fn` against central
/// differences. The output is reduced to a scalar with a fixed random
/// projection so every output entry participates.
GradCheckReport grad_check(const std::string& op_name, const GradFn& fn,
                           const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options = {});

/// Same comparison for a closure over existing leaves (model parameters,
/// inputs). Leaves are perturbed in place and restored.
GradCheckReport grad_check_leaves(const std::string& op_name, const std::function<Var<double>()>& fn,
                                  const std::vector<Var<double>>& leaves,
                                  const GradCheckOptions& options = {});

/// Skip predicate for coordinate inputs: entries within `tol` of an integer
/// sit on a bilinear kink.
std::function<bool(std::size_t, std::size_t, const std::vector<Tensor<double>>&)>
skip_integer_coordinates(std::size_t coordinate_input, double tol);

}  // namespace georecon::diffcore
