// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/diffcore/autograd.hpp"

#include <unordered_set>

namespace georecon::diffcore {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T> make_result(std::string_view op, Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed) {
  if (!root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<T>* top = root.node().get();
  Tensor<T>& g = top->grad_buffer();
  if (seed) {
    if (seed->shape() != top->value.shape()) throw ShapeError("backward seed shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*seed)[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(1);
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward) continue;  // leaf
    if (node->grad.size() == node->value.size() && node->grad.shape() == node->value.shape()) {
      node->backward(*node);
    }
    // Interior gradients are not needed after propagation.
    node->grad = Tensor<T>();
  }
}

template <typename T>
Var<T> ParamStore<T>::add(const std::string& name, Tensor<T> init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Var<T> v = Var<T>::leaf(std::move(init), true);
  index_.emplace(name, params_.size());
  params_.push_back({name, v});
  return v;
}

template <typename T>
Var<T> ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].var;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

#define GEORECON_INSTANTIATE(T)                                                                  \
  template Var<T> make_result<T>(std::string_view, Tensor<T>, std::vector<Var<T>>,               \
                                 std::function<void(Node<T>&)>);                                 \
  template void backward<T>(const Var<T>&, const Tensor<T>*);                                    \
  template class ParamStore<T>;

GEORECON_INSTANTIATE(float)
GEORECON_INSTANTIATE(double)
#undef GEORECON_INSTANTIATE

}  // namespace georecon::diffcore
