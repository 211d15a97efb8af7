// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "georecon/diffcore/tensor.hpp"

namespace georecon::testing {

template <typename T = double>
diffcore::Tensor<T> random_tensor(diffcore::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  diffcore::Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const diffcore::Tensor<T>& a, const diffcore::Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace georecon::testing
