// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "georecon/errors.hpp"
#include "georecon/occupancy/occupancy.hpp"

namespace georecon::occupancy {

using diffcore::Node;
using diffcore::Shape;

namespace {

struct AffinitySums {
  double a = 0, b = 0, c = 0, d = 0, e = 0;  // sum p y, sum p, sum y, sum (1-p)(1-y), sum (1-y)
  bool use_pr() const { return c > 0; }
  bool use_s() const { return e > 0; }
  double loss() const {
    double l = 0;
    if (use_pr()) l += -std::log(a / b) - std::log(a / c);
    if (use_s()) l += -std::log(d / e);
    return l;
  }
  // d loss / d p_i for a cell with label y.
  double grad(double y) const {
    double g = 0;
    if (use_pr()) g += -2.0 * y / a + 1.0 / b;
    if (use_s()) g += (1.0 - y) / d;
    return g;
  }
};

// p and q = 1 - p kept separately so saturated logits stay accurate.
AffinitySums affinity_sums(const std::vector<double>& p, const std::vector<double>& q, const std::vector<double>& y) {
  AffinitySums s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.a += p[i] * y[i];
    s.b += p[i];
    s.c += y[i];
    s.d += q[i] * (1.0 - y[i]);
    s.e += 1.0 - y[i];
  }
  return s;
}

template <typename T>
void check_labels(const Var<T>& pred, const Tensor<T>& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": prediction " + diffcore::shape_str(pred.shape()) + " vs target " +
                     diffcore::shape_str(gt.shape()));
  }
  if (gt.size() == 0) throw ShapeError(std::string(what) + ": empty grid");
}

constexpr double kProbClamp = 1e-12;

template <typename T>
Var<T> prob_loss(const Var<T>& pred, const Tensor<T>& gt, bool with_bce, const char* name) {
  check_labels(pred, gt, name);
  const std::size_t n = gt.size();
  std::vector<double> p(n), q(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = static_cast<double>(pred.value()[i]);
    q[i] = 1.0 - p[i];
    y[i] = static_cast<double>(gt[i]);
  }
  const auto sums = affinity_sums(p, q, y);
  double loss = sums.loss();
  if (with_bce) {
    double bce = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
      bce -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
    }
    loss += bce / static_cast<double>(n);
  }
  return diffcore::make_result<T>(name, Tensor<T>::scalar(static_cast<T>(loss)), {pred},
                                  [sums, p, y, with_bce](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_buffer();
    const double up = static_cast<double>(nd.grad[0]);
    const double inv_n = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      double d = sums.grad(y[i]);
      if (with_bce && p[i] > kProbClamp && p[i] < 1.0 - kProbClamp) {
        d += (-y[i] / p[i] + (1.0 - y[i]) / (1.0 - p[i])) * inv_n;
      }
      g[i] += static_cast<T>(up * d);
    }
  });
}

}  // namespace

template <typename T>
Var<T> stage1_loss(const Var<T>& pred, const Tensor<T>& gt) {
  return prob_loss(pred, gt, true, "stage1_loss");
}

template <typename T>
Var<T> affinity_loss(const Var<T>& pred, const Tensor<T>& gt) {
  return prob_loss(pred, gt, false, "affinity_loss");
}

template <typename T>
Var<T> stage1_loss_logits(const Var<T>& logits, const Tensor<T>& gt) {
  check_labels(logits, gt, "stage1_loss");
  const std::size_t n = gt.size();
  std::vector<double> p(n), q(n), y(n);
  double bce = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(logits.value()[i]);
    p[i] = 1.0 / (1.0 + std::exp(-x));
    q[i] = 1.0 / (1.0 + std::exp(x));
    y[i] = static_cast<double>(gt[i]);
    bce += std::max(x, 0.0) - y[i] * x + std::log1p(std::exp(-std::abs(x)));
  }
  const auto sums = affinity_sums(p, q, y);
  const double loss = bce / static_cast<double>(n) + sums.loss();
  return diffcore::make_result<T>("stage1_loss", Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                                  [sums, p, q, y](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_buffer();
    const double up = static_cast<double>(nd.grad[0]);
    const double inv_n = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = (p[i] - y[i]) * inv_n + sums.grad(y[i]) * p[i] * q[i];
      g[i] += static_cast<T>(up * d);
    }
  });
}

template Var<float> stage1_loss<float>(const Var<float>&, const Tensor<float>&);
template Var<double> stage1_loss<double>(const Var<double>&, const Tensor<double>&);
template Var<float> affinity_loss<float>(const Var<float>&, const Tensor<float>&);
template Var<double> affinity_loss<double>(const Var<double>&, const Tensor<double>&);
template Var<float> stage1_loss_logits<float>(const Var<float>&, const Tensor<float>&);
template Var<double> stage1_loss_logits<double>(const Var<double>&, const Tensor<double>&);

}  // namespace georecon::occupancy
