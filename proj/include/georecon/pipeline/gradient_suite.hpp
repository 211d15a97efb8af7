// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "georecon/diffcore/gradcheck.hpp"

namespace georecon::pipeline {

struct SuiteEntry {
  diffcore::GradCheckReport report;
  double tolerance = 1e-4;
  double seconds = 0;
  bool passed() const { return report.passed(tolerance); }
};

/// Finite-difference checks at double precision over every differentiable
/// piece of the pipeline: primitives, rope, deformable cross-attention
/// (including sampling-coordinate gradients), a full block, decoding,
/// rendering and all losses. `seeds` random draws per check.
std::vector<SuiteEntry> run_gradient_suite(int seeds = 3, const std::function<void(const SuiteEntry&)>& on_entry = {});

std::string format_suite_entry(const SuiteEntry& e);

}  // namespace georecon::pipeline
