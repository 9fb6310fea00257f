#pragma once

#include <memory>
#include <string>
#include <vector>

#include "light/ops_conv.hpp"
#include "light/ops_norm.hpp"

namespace light {

// Flat registry of named parameters and buffers, in registration order.
// Checkpoints and the optimizer walk this list; order is deterministic
// because module construction is.
template <typename T>
struct ParamRegistry {
  std::vector<std::pair<std::string, Var<T>>> params;
  std::vector<std::pair<std::string, std::shared_ptr<Tensor<T>>>> buffers;

  Var<T> add_param(const std::string& name, Tensor<T> t) {
    auto v = Var<T>::leaf(std::move(t), true);
    params.emplace_back(name, v);
    return v;
  }
  std::shared_ptr<Tensor<T>> add_buffer(const std::string& name, Tensor<T> t) {
    auto p = std::make_shared<Tensor<T>>(std::move(t));
    buffers.emplace_back(name, p);
    return p;
  }
  Var<T>* find_param(const std::string& name) {
    for (auto& [k, v] : params)
      if (k == name) return &v;
    return nullptr;
  }
  size_t param_count() const {
    size_t n = 0;
    for (auto& [k, v] : params) n += v.val().numel();
    return n;
  }
  void zero_grad() {
    for (auto& [k, v] : params) v.zero_grad();
  }
};

// Identity (Dirac) kernel plus small noise, for layers that should start as
// a near-identity map.
template <typename T>
Tensor<T> dirac_kernel(int channels, int k, Rng& rng, double noise_std) {
  Tensor<T> w = Tensor<T>::randn({channels, channels, k, k}, rng, static_cast<T>(noise_std));
  int c = k / 2;
  for (int i = 0; i < channels; ++i) w.at(i, i, c, c) += T(1);
  return w;
}

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int stride = 1, pad = 0;
  PadMode pad_mode = PadMode::Zero;

  Conv2d() = default;
  // init_std < 0 selects He initialization (sqrt(2/fan_in)).
  Conv2d(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, int k,
         int stride_, int pad_, Rng& rng, bool bias = true, double init_std = -1.0,
         PadMode mode = PadMode::Zero) {
    stride = stride_;
    pad = pad_;
    pad_mode = mode;
    double std = init_std >= 0 ? init_std : std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    w = reg.add_param(name + ".w",
                      Tensor<T>::randn({cout, cin, k, k}, rng, static_cast<T>(std)));
    if (bias) b = reg.add_param(name + ".b", Tensor<T>({cout}));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad, pad_mode); }
};

template <typename T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, int fin, int fout, Rng& rng,
         double init_std = -1.0) {
    double std = init_std >= 0 ? init_std : std::sqrt(2.0 / static_cast<double>(fin));
    w = reg.add_param(name + ".w", Tensor<T>::randn({fout, fin}, rng, static_cast<T>(std)));
    b = reg.add_param(name + ".b", Tensor<T>({fout}));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct BatchNorm2d {
  Var<T> gamma, beta;
  std::shared_ptr<Tensor<T>> running_mean, running_var;
  T momentum = T(0.1);

  BatchNorm2d() = default;
  BatchNorm2d(ParamRegistry<T>& reg, const std::string& name, int c) {
    gamma = reg.add_param(name + ".gamma", Tensor<T>::full({c}, T(1)));
    beta = reg.add_param(name + ".beta", Tensor<T>({c}));
    running_mean = reg.add_buffer(name + ".running_mean", Tensor<T>({c}));
    running_var = reg.add_buffer(name + ".running_var", Tensor<T>::full({c}, T(1)));
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    return batch_norm(x, gamma, beta, *running_mean, *running_var, training, momentum);
  }
};

}  // namespace light
