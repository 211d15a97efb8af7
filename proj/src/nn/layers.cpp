// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/nn/layers.hpp"

#include <cmath>

namespace georecon::nn {

template <typename T>
Tensor<T> init_tensor(Shape shape, int fan_in, Init init, std::mt19937_64& rng, double small_std) {
  Tensor<T> t(std::move(shape));
  if (init == Init::kZero) return t;
  const double std_dev = init == Init::kFanIn ? 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1))) : small_std;
  std::normal_distribution<double> normal(0.0, std_dev);
  for (auto& v : t.vec()) v = static_cast<T>(normal(rng));
  return t;
}

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, int cin, int cout, std::mt19937_64& rng,
                  Init init, bool bias) {
  w = store.add(name + ".w", init_tensor<T>({cin, cout}, cin, init, rng));
  if (bias) b = store.add(name + ".b", Tensor<T>::zeros({cout}));
}

template <typename T>
RMSNorm<T>::RMSNorm(ParamStore<T>& store, const std::string& name, int dim) {
  g = store.add(name + ".g", Tensor<T>::full({dim}, T(1)));
}

template <typename T>
FeedForward<T>::FeedForward(ParamStore<T>& store, const std::string& name, int dim, int hidden,
                            std::mt19937_64& rng, Init out_init)
    : fc1(store, name + ".fc1", dim, hidden, rng), fc2(store, name + ".fc2", hidden, dim, rng, out_init) {}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int kernel, int cin, int cout, int stride_,
                  int pad_, std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  w = store.add(name + ".w", init_tensor<T>({kernel, kernel, cin, cout}, kernel * kernel * cin, Init::kFanIn, rng));
  b = store.add(name + ".b", Tensor<T>::zeros({cout}));
}

template Tensor<float> init_tensor<float>(Shape, int, Init, std::mt19937_64&, double);
template Tensor<double> init_tensor<double>(Shape, int, Init, std::mt19937_64&, double);
template struct Linear<float>;
template struct Linear<double>;
template struct RMSNorm<float>;
template struct RMSNorm<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;

}  // namespace georecon::nn
