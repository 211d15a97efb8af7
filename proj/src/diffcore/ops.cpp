// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/diffcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "georecon/diffcore/sampling.hpp"

namespace georecon::diffcore {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

int norm_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, std::string(op) + ": axis out of range");
  return axis;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result<T>("add", std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& pg = p->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& n) {
    const T sign[2] = {T(1), T(-1)};
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[static_cast<std::size_t>(k)];
      if (!p->requires_grad) continue;
      auto& pg = p->grad_buffer();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += sign[k] * n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>("mul", std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return make_result<T>("scale", std::move(out), {a}, [s](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().vec()) acc += v;
  return make_result<T>("sum", Tensor<T>::scalar(acc), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    const T up = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  require(a.size() > 0, "mean: empty tensor");
  const T inv = T(1) / static_cast<T>(a.size());
  T acc = 0;
  for (T v : a.value().vec()) acc += v;
  return make_result<T>("mean", Tensor<T>::scalar(acc * inv), {a}, [inv](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    const T up = n.grad[0] * inv;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
  return make_result<T>("sigmoid", std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = n.value[i];
      g[i] += n.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sigmoid_scalar(xv[i]);
  return make_result<T>("silu", std::move(out), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T xi = p.value[i];
      const T s = sigmoid_scalar(xi);
      g[i] += n.grad[i] * (s + xi * s * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  const Shape& shape = x.shape();
  axis = norm_axis(axis, static_cast<int>(shape.size()), "softmax");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= static_cast<std::size_t>(shape[i]);
  const auto len = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  Tensor<T> out(shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      T z = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  return make_result<T>("softmax", std::move(out), {x}, [outer, inner, len](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t l = 0; l < len; ++l) dot += n.grad[base + l * inner] * n.value[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = base + l * inner;
          g[i] += n.value[i] * (n.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> masked_softmax(const Var<T>& x, const Tensor<T>& mask) {
  require(x.shape() == mask.shape(), "masked_softmax: mask shape mismatch");
  require(!x.shape().empty(), "masked_softmax: scalar input");
  const auto len = static_cast<std::size_t>(x.shape().back());
  const std::size_t rows = len ? x.size() / len : 0;
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * len;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t l = 0; l < len; ++l) {
      if (mask[base + l] != T(0)) mx = std::max(mx, xv[base + l]);
    }
    if (!std::isfinite(mx)) continue;  // no valid entry
    T z = 0;
    for (std::size_t l = 0; l < len; ++l) {
      if (mask[base + l] == T(0)) continue;
      const T e = std::exp(xv[base + l] - mx);
      out[base + l] = e;
      z += e;
    }
    for (std::size_t l = 0; l < len; ++l) out[base + l] /= z;
  }
  return make_result<T>("masked_softmax", std::move(out), {x}, [rows, len](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * len;
      T dot = 0;
      for (std::size_t l = 0; l < len; ++l) dot += n.grad[base + l] * n.value[base + l];
      for (std::size_t l = 0; l < len; ++l) {
        g[base + l] += n.value[base + l] * (n.grad[base + l] - dot);
      }
    }
  });
}

template <typename T>
Var<T> rmsnorm(const Var<T>& x, const Var<T>& g, T eps) {
  require(!x.shape().empty(), "rmsnorm: scalar input");
  const auto d = static_cast<std::size_t>(x.shape().back());
  require(g.shape() == Shape{static_cast<int>(d)}, "rmsnorm: gain must be [" + std::to_string(d) + "]");
  const std::size_t rows = d ? x.size() / d : 0;
  Tensor<T> out(x.shape());
  std::vector<T> inv_rms(rows);
  const auto& xv = x.value();
  const auto& gv = g.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t c = 0; c < d; ++c) ss += xv[r * d + c] * xv[r * d + c];
    const T inv = T(1) / std::sqrt(ss / static_cast<T>(d) + eps);
    inv_rms[r] = inv;
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xv[r * d + c] * inv * gv[c];
  }
  return make_result<T>("rmsnorm", std::move(out), {x, g},
                        [rows, d, inv_rms = std::move(inv_rms)](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    const auto& xv = px.value;
    const auto& gv = pg.value;
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const T inv = inv_rms[r];
        T dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += n.grad[r * d + c] * gv[c] * xv[r * d + c];
        const T k = dot * inv * inv * inv / static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) {
          gx[r * d + c] += n.grad[r * d + c] * gv[c] * inv - xv[r * d + c] * k;
        }
      }
    }
    if (pg.requires_grad) {
      auto& gg = pg.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) gg[c] += n.grad[r * d + c] * xv[r * d + c] * inv_rms[r];
      }
    }
  });
}

namespace {

template <typename T>
Var<T> linear_impl(const Var<T>& x, const Var<T>& w, const Var<T>* b) {
  require(w.shape().size() == 2, "linear: weight must be 2D, got " + shape_str(w.shape()));
  require(!x.shape().empty(), "linear: scalar input");
  const int cin = w.shape()[0];
  const int cout = w.shape()[1];
  require(x.shape().back() == cin, "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                                       shape_str(w.shape()));
  if (b) require(b->shape() == Shape{cout}, "linear: bias must be [" + std::to_string(cout) + "]");
  const auto rows = static_cast<Eigen::Index>(cin ? x.size() / static_cast<std::size_t>(cin) : 0);
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor<T> out(out_shape);
  CMapMat<T> X(x.value().data(), rows, cin);
  CMapMat<T> W(w.value().data(), cin, cout);
  MapMat<T> Y(out.data(), rows, cout);
  Y.noalias() = X * W;
  if (b) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b->value().data(), cout);
    Y.rowwise() += bias;
  }
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(*b);
  return make_result<T>("linear", std::move(out), std::move(parents), [rows, cin, cout](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    CMapMat<T> dY(n.grad.data(), rows, cout);
    if (px.requires_grad) {
      MapMat<T> dX(px.grad_buffer().data(), rows, cin);
      CMapMat<T> W(pw.value.data(), cin, cout);
      dX.noalias() += dY * W.transpose();
    }
    if (pw.requires_grad) {
      MapMat<T> dW(pw.grad_buffer().data(), cin, cout);
      CMapMat<T> X(px.value.data(), rows, cin);
      dW.noalias() += X.transpose() * dY;
    }
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(n.parents[2]->grad_buffer().data(), cout);
      // Row by row: a vectorized column reduction over a map peels by address,
      // which makes the summation order depend on allocation alignment.
      for (Eigen::Index r = 0; r < dY.rows(); ++r) db += dY.row(r);
    }
  });
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return linear_impl(x, w, &b);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
  return linear_impl<T>(x, w, nullptr);
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const int rank = static_cast<int>(s0.size());
  axis = norm_axis(axis, rank, "concat");
  std::size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s0[static_cast<std::size_t>(i)]);
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::size_t> chunk(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Shape& s = xs[k].shape();
    require(static_cast<int>(s.size()) == rank, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis) require(s[static_cast<std::size_t>(i)] == s0[static_cast<std::size_t>(i)], "concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    }
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
    chunk[k] = outer ? xs[k].size() / outer : 0;
  }
  std::size_t row = 0;
  for (auto c : chunk) row += c;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const T* src = xs[k].value().data() + o * chunk[k];
      std::copy(src, src + chunk[k], out.data() + off);
      off += chunk[k];
    }
  }
  return make_result<T>("concat", std::move(out), xs, [outer, row, chunk](Node<T>& n) {
    std::size_t start = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      auto& p = *n.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = n.grad.data() + o * row + start;
          T* dst = g.data() + o * chunk[k];
          for (std::size_t i = 0; i < chunk[k]; ++i) dst[i] += src[i];
        }
      }
      start += chunk[k];
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int start, int length) {
  const Shape& s = x.shape();
  axis = norm_axis(axis, static_cast<int>(s.size()), "slice");
  const int full = s[static_cast<std::size_t>(axis)];
  require(start >= 0 && length >= 0 && start + length <= full, "slice: range out of bounds");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = length;
  Tensor<T> out(out_shape);
  const std::size_t src_row = static_cast<std::size_t>(full) * inner;
  const std::size_t dst_row = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x.value().data() + o * src_row + off;
    std::copy(src, src + dst_row, out.data() + o * dst_row);
  }
  return make_result<T>("slice", std::move(out), {x}, [outer, src_row, dst_row, off](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = g.data() + o * src_row + off;
      const T* src = n.grad.data() + o * dst_row;
      for (std::size_t i = 0; i < dst_row; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>("reshape", std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Var<T> broadcast_rows(const Var<T>& v, int n_rows) {
  require(v.shape().size() == 1, "broadcast_rows: expects a vector");
  require(n_rows >= 0, "broadcast_rows: negative row count");
  const auto c = static_cast<std::size_t>(v.shape()[0]);
  Tensor<T> out(Shape{n_rows, static_cast<int>(c)});
  for (std::size_t r = 0; r < static_cast<std::size_t>(n_rows); ++r) {
    std::copy(v.value().data(), v.value().data() + c, out.data() + r * c);
  }
  return make_result<T>("broadcast_rows", std::move(out), {v}, [c, n_rows](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < static_cast<std::size_t>(n_rows); ++r) {
      for (std::size_t i = 0; i < c; ++i) g[i] += n.grad[r * c + i];
    }
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& w, const std::vector<Var<T>>& xs) {
  require(w.shape().size() == 2, "weighted_sum: weights must be [N, V]");
  const auto rows = static_cast<std::size_t>(w.shape()[0]);
  const auto views = static_cast<std::size_t>(w.shape()[1]);
  require(xs.size() == views, "weighted_sum: expected one input per weight column");
  require(!xs.empty(), "weighted_sum: no inputs");
  const Shape& s = xs[0].shape();
  require(s.size() == 2 && static_cast<std::size_t>(s[0]) == rows, "weighted_sum: inputs must be [N, C]");
  for (const auto& x : xs) require(x.shape() == s, "weighted_sum: input shape mismatch");
  const auto c = static_cast<std::size_t>(s[1]);
  Tensor<T> out(s);
  for (std::size_t v = 0; v < views; ++v) {
    const auto& xv = xs[v].value();
    for (std::size_t r = 0; r < rows; ++r) {
      const T wr = w.value()[r * views + v];
      if (wr == T(0)) continue;
      for (std::size_t i = 0; i < c; ++i) out[r * c + i] += wr * xv[r * c + i];
    }
  }
  std::vector<Var<T>> parents{w};
  parents.insert(parents.end(), xs.begin(), xs.end());
  return make_result<T>("weighted_sum", std::move(out), std::move(parents), [rows, views, c](Node<T>& n) {
    auto& pw = *n.parents[0];
    for (std::size_t v = 0; v < views; ++v) {
      auto& px = *n.parents[v + 1];
      if (pw.requires_grad) {
        auto& gw = pw.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          T dot = 0;
          for (std::size_t i = 0; i < c; ++i) dot += n.grad[r * c + i] * px.value[r * c + i];
          gw[r * views + v] += dot;
        }
      }
      if (px.requires_grad) {
        auto& gx = px.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const T wr = pw.value[r * views + v];
          for (std::size_t i = 0; i < c; ++i) gx[r * c + i] += wr * n.grad[r * c + i];
        }
      }
    }
  });
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mse");
  require(a.size() > 0, "mse: empty input");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(a.size());
  return make_result<T>("mse", Tensor<T>::scalar(acc * inv), {a, b}, [inv](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    const T k = T(2) * inv * n.grad[0];
    T* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
    T* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < pa.value.size(); ++i) {
      const T d = k * (pa.value[i] - pb.value[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  require(x.shape().size() == 3, "conv2d: input must be [H, W, C], got " + shape_str(x.shape()));
  require(w.shape().size() == 4, "conv2d: weight must be [kh, kw, Cin, Cout]");
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/pad");
  const int h = x.shape()[0], wd = x.shape()[1], cin = x.shape()[2];
  const int kh = w.shape()[0], kw = w.shape()[1], cout = w.shape()[3];
  require(w.shape()[2] == cin, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(b.shape() == Shape{cout}, "conv2d: bias must be [Cout]");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");
  const Eigen::Index patch = static_cast<Eigen::Index>(kh) * kw * cin;
  const Eigen::Index npos = static_cast<Eigen::Index>(ho) * wo;

  auto cols = std::make_shared<RowMat<T>>(RowMat<T>::Zero(npos, patch));
  const T* xv = x.value().data();
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* row = cols->data() + (static_cast<Eigen::Index>(oy) * wo + ox) * patch;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= wd) continue;
          const T* src = xv + (static_cast<std::size_t>(iy) * wd + ix) * cin;
          std::copy(src, src + cin, row + (ky * kw + kx) * cin);
        }
      }
    }
  }
  Tensor<T> out(Shape{ho, wo, cout});
  CMapMat<T> W(w.value().data(), patch, cout);
  MapMat<T> Y(out.data(), npos, cout);
  Y.noalias() = (*cols) * W;
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.value().data(), cout);
  Y.rowwise() += bias;

  return make_result<T>("conv2d", std::move(out), {x, w, b},
                        [cols, h, wd, cin, kh, kw, cout, ho, wo, stride, pad, patch, npos](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    auto& pb = *n.parents[2];
    CMapMat<T> dY(n.grad.data(), npos, cout);
    if (pw.requires_grad) {
      MapMat<T> dW(pw.grad_buffer().data(), patch, cout);
      dW.noalias() += cols->transpose() * dY;
    }
    if (pb.requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(pb.grad_buffer().data(), cout);
      for (Eigen::Index r = 0; r < dY.rows(); ++r) db += dY.row(r);
    }
    if (px.requires_grad) {
      CMapMat<T> W(pw.value.data(), patch, cout);
      RowMat<T> dcols = dY * W.transpose();
      T* gx = px.grad_buffer().data();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T* row = dcols.data() + (static_cast<Eigen::Index>(oy) * wo + ox) * patch;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= wd) continue;
              T* dst = gx + (static_cast<std::size_t>(iy) * wd + ix) * cin;
              const T* src = row + (ky * kw + kx) * cin;
              for (int c = 0; c < cin; ++c) dst[c] += src[c];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> bilinear_sample(const Var<T>& feature, const Var<T>& points) {
  require(feature.shape().size() == 3, "bilinear_sample: feature must be [H, W, C]");
  require(points.shape().size() == 2 && points.shape()[1] == 2, "bilinear_sample: points must be [P, 2]");
  const int h = feature.shape()[0], w = feature.shape()[1], c = feature.shape()[2];
  require(h > 0 && w > 0, "bilinear_sample: empty feature map");
  const int np = points.shape()[0];
  const auto cs = static_cast<std::size_t>(c);
  Tensor<T> out(Shape{np, c});
  std::vector<BilinearTaps> taps(static_cast<std::size_t>(np));
  const T* f = feature.value().data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(np); ++p) {
    const auto t = bilinear_taps(points.value()[2 * p], points.value()[2 * p + 1], h, w);
    taps[p] = t;
    const T w00 = static_cast<T>(t.w00()), w01 = static_cast<T>(t.w01());
    const T w10 = static_cast<T>(t.w10()), w11 = static_cast<T>(t.w11());
    T* dst = out.data() + p * cs;
    for (std::size_t k = 0; k < cs; ++k) {
      dst[k] = w00 * f[t.o00 * cs + k] + w01 * f[t.o01 * cs + k] + w10 * f[t.o10 * cs + k] +
               w11 * f[t.o11 * cs + k];
    }
  }
  return make_result<T>("bilinear_sample", std::move(out), {feature, points},
                        [taps = std::move(taps), cs](Node<T>& n) {
    auto& pf = *n.parents[0];
    auto& pp = *n.parents[1];
    const T* f = pf.value.data();
    T* gf = pf.requires_grad ? pf.grad_buffer().data() : nullptr;
    T* gp = pp.requires_grad ? pp.grad_buffer().data() : nullptr;
    for (std::size_t p = 0; p < taps.size(); ++p) {
      const auto& t = taps[p];
      const T* up = n.grad.data() + p * cs;
      if (gf) {
        const T w00 = static_cast<T>(t.w00()), w01 = static_cast<T>(t.w01());
        const T w10 = static_cast<T>(t.w10()), w11 = static_cast<T>(t.w11());
        for (std::size_t k = 0; k < cs; ++k) {
          gf[t.o00 * cs + k] += w00 * up[k];
          gf[t.o01 * cs + k] += w01 * up[k];
          gf[t.o10 * cs + k] += w10 * up[k];
          gf[t.o11 * cs + k] += w11 * up[k];
        }
      }
      if (gp) {
        const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
        T gx = 0, gy = 0;
        for (std::size_t k = 0; k < cs; ++k) {
          const T v00 = f[t.o00 * cs + k], v01 = f[t.o01 * cs + k];
          const T v10 = f[t.o10 * cs + k], v11 = f[t.o11 * cs + k];
          gx += up[k] * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
          gy += up[k] * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
        }
        if (!t.clamp_x) gp[2 * p] += gx;
        if (!t.clamp_y) gp[2 * p + 1] += gy;
      }
    }
  });
}

namespace {

template <typename T>
using Strided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedMut = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

// Softmax probabilities for query rows [r0, r0 + rows) of one head.
template <typename T>
RowMat<T> attention_probs(const Strided<T>& q_rows, const Strided<T>& k, T scale_factor) {
  RowMat<T> s = (q_rows * k.transpose()) * scale_factor;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

constexpr int kAttentionBlock = 256;

}  // namespace

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads) {
  require(q.shape().size() == 2 && k.shape().size() == 2 && v.shape().size() == 2,
          "attention: q, k, v must be 2D");
  const int nq = q.shape()[0], c = q.shape()[1], nk = k.shape()[0];
  require(k.shape()[1] == c && v.shape() == k.shape(), "attention: q/k/v width mismatch");
  require(heads >= 1 && c % heads == 0, "attention: heads must divide the width");
  require(nk > 0 || nq == 0, "attention: no keys");
  const int dh = c / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));

  // Queries are processed in row blocks so the probability matrix never
  // exceeds kAttentionBlock x nk; backward recomputes it the same way.
  Tensor<T> out(Shape{nq, c});
  for (int h = 0; h < heads; ++h) {
    Strided<T> K(k.value().data() + h * dh, nk, dh, Eigen::OuterStride<>(c));
    Strided<T> V(v.value().data() + h * dh, nk, dh, Eigen::OuterStride<>(c));
    for (int r0 = 0; r0 < nq; r0 += kAttentionBlock) {
      const int rows = std::min(kAttentionBlock, nq - r0);
      Strided<T> Q(q.value().data() + static_cast<std::size_t>(r0) * c + h * dh, rows, dh, Eigen::OuterStride<>(c));
      const RowMat<T> P = attention_probs<T>(Q, K, scale_factor);
      StridedMut<T> O(out.data() + static_cast<std::size_t>(r0) * c + h * dh, rows, dh, Eigen::OuterStride<>(c));
      O.noalias() = P * V;
    }
  }
  return make_result<T>("attention", std::move(out), {q, k, v}, [nq, nk, c, dh, heads, scale_factor](Node<T>& n) {
    auto& pq = *n.parents[0];
    auto& pk = *n.parents[1];
    auto& pv = *n.parents[2];
    T* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
    T* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
    T* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
    for (int h = 0; h < heads; ++h) {
      Strided<T> K(pk.value.data() + h * dh, nk, dh, Eigen::OuterStride<>(c));
      Strided<T> V(pv.value.data() + h * dh, nk, dh, Eigen::OuterStride<>(c));
      for (int r0 = 0; r0 < nq; r0 += kAttentionBlock) {
        const int rows = std::min(kAttentionBlock, nq - r0);
        const std::size_t off = static_cast<std::size_t>(r0) * c + h * dh;
        Strided<T> Q(pq.value.data() + off, rows, dh, Eigen::OuterStride<>(c));
        Strided<T> dO(n.grad.data() + off, rows, dh, Eigen::OuterStride<>(c));
        const RowMat<T> P = attention_probs<T>(Q, K, scale_factor);
        if (gv) {
          StridedMut<T> dV(gv + h * dh, nk, dh, Eigen::OuterStride<>(c));
          dV.noalias() += P.transpose() * dO;
        }
        if (gq || gk) {
          RowMat<T> dS = P.cwiseProduct(dO * V.transpose());
          const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = dS.rowwise().sum();
          dS -= P.cwiseProduct(rowdot.replicate(1, nk));
          dS *= scale_factor;
          if (gq) {
            StridedMut<T> dQ(gq + off, rows, dh, Eigen::OuterStride<>(c));
            dQ.noalias() += dS * K;
          }
          if (gk) {
            StridedMut<T> dK(gk + h * dh, nk, dh, Eigen::OuterStride<>(c));
            dK.noalias() += dS.transpose() * Q;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> rope3d(const Var<T>& x, const Tensor<T>& coords, int head_dim, T position_scale, T theta) {
  require(x.shape().size() == 2, "rope3d: input must be [N, C]");
  const int n = x.shape()[0], c = x.shape()[1];
  require(coords.shape() == Shape{n, 3}, "rope3d: coords must be [N, 3]");
  require(head_dim > 0 && head_dim % 6 == 0, "rope3d: head dim " + std::to_string(head_dim) + " not divisible by 6");
  require(c % head_dim == 0, "rope3d: head dim must divide the width");
  const int group = head_dim / 3;
  const int pairs = group / 2;
  const int heads = c / head_dim;
  std::vector<T> freq(static_cast<std::size_t>(pairs));
  for (int j = 0; j < pairs; ++j) {
    freq[static_cast<std::size_t>(j)] = std::pow(theta, -T(2 * j) / static_cast<T>(group));
  }
  // cos/sin per (row, axis, pair)
  auto cs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * 3 * pairs * 2);
  for (int r = 0; r < n; ++r) {
    for (int a = 0; a < 3; ++a) {
      const T pos = coords[static_cast<std::size_t>(r) * 3 + a] * position_scale;
      for (int j = 0; j < pairs; ++j) {
        const std::size_t idx = ((static_cast<std::size_t>(r) * 3 + a) * pairs + j) * 2;
        const T ang = pos * freq[static_cast<std::size_t>(j)];
        (*cs)[idx] = std::cos(ang);
        (*cs)[idx + 1] = std::sin(ang);
      }
    }
  }
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  auto apply = [=](const T* src, T* dst, const std::vector<T>& table, T sign) {
    for (int r = 0; r < n; ++r) {
      for (int h = 0; h < heads; ++h) {
        for (int a = 0; a < 3; ++a) {
          for (int j = 0; j < pairs; ++j) {
            const std::size_t ci = static_cast<std::size_t>(r) * c + h * head_dim + a * group + 2 * j;
            const std::size_t ti = ((static_cast<std::size_t>(r) * 3 + a) * pairs + j) * 2;
            const T co = table[ti], si = sign * table[ti + 1];
            const T x0 = src[ci], x1 = src[ci + 1];
            dst[ci] += x0 * co - x1 * si;
            dst[ci + 1] += x0 * si + x1 * co;
          }
        }
      }
    }
  };
  apply(xv, out.data(), *cs, T(1));
  return make_result<T>("rope3d", std::move(out), {x}, [cs, apply](Node<T>& nd) {
    // The transpose of a rotation is the rotation by the negated angle.
    apply(nd.grad.data(), nd.parents[0]->grad_buffer().data(), *cs, T(-1));
  });
}

#define GEORECON_INSTANTIATE(T)                                                                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale<T>(const Var<T>&, T);                                                    \
  template Var<T> sum<T>(const Var<T>&);                                                         \
  template Var<T> mean<T>(const Var<T>&);                                                        \
  template Var<T> silu<T>(const Var<T>&);                                                        \
  template Var<T> sigmoid<T>(const Var<T>&);                                                     \
  template Var<T> softmax<T>(const Var<T>&, int);                                                \
  template Var<T> masked_softmax<T>(const Var<T>&, const Tensor<T>&);                            \
  template Var<T> rmsnorm<T>(const Var<T>&, const Var<T>&, T);                                   \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> concat<T>(const std::vector<Var<T>>&, int);                                    \
  template Var<T> slice<T>(const Var<T>&, int, int, int);                                        \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                              \
  template Var<T> broadcast_rows<T>(const Var<T>&, int);                                         \
  template Var<T> weighted_sum<T>(const Var<T>&, const std::vector<Var<T>>&);                    \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);              \
  template Var<T> bilinear_sample<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, int);                \
  template Var<T> rope3d<T>(const Var<T>&, const Tensor<T>&, int, T, T);

GEORECON_INSTANTIATE(float)
GEORECON_INSTANTIATE(double)
#undef GEORECON_INSTANTIATE

}  // namespace georecon::diffcore
