// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "georecon/diffcore/tensor.hpp"

namespace georecon::diffcore {

/// Graph recording is on by default; NoGradGuard turns it off for the
/// current thread (inference, evaluation).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) {
      grad = Tensor<T>::zeros(value.shape());
    }
    return grad;
  }
};

/// Handle to a value in the computation graph. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var leaf(Tensor<T> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor<T>& grad() { return node_->grad_buffer(); }
  const Tensor<T>& grad_or_empty() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  std::shared_ptr<Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds a result node. Records parents and the backward closure only when
/// recording is enabled and some parent needs a gradient. Throws NumericError
/// when the value contains NaN/Inf.
template <typename T>
Var<T> make_result(std::string_view op, Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward);

/// Reverse sweep from `root`. The root's gradient is seeded with ones unless
/// `seed` is given. Gradients accumulate into leaves; intermediate gradients
/// are released once consumed.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr);

/// A named trainable tensor.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
};

/// Ordered registry of a model's parameters. Names are unique.
template <typename T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init);

  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<Parameter<T>>& params() { return params_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Var<T> get(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  void zero_grad();

  /// Copies values by name from another store (possibly of another scalar type).
  template <typename U>
  void load_from(const ParamStore<U>& other) {
    for (const auto& p : other.params()) {
      Var<T> dst = get(p.name);
      const auto& src = p.var.value();
      if (src.shape() != dst.shape()) {
        throw ShapeError("parameter " + p.name + " shape mismatch: " + shape_str(src.shape()) +
                         " vs " + shape_str(dst.shape()));
      }
      auto& out = dst.mutable_value();
      for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<T>(src[i]);
    }
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace georecon::diffcore
