#pragma once

#include <cmath>

#include "light/autodiff.hpp"

namespace light {

// Elementwise binary cross-entropy on logits, numerically stable form:
// max(x,0) - x*z + log(1 + exp(-|x|)).
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  require_same_shape(logits.val(), targets, "bce_with_logits");
  Tensor<T> out(logits.val().shape);
  const auto& x = logits.val();
  for (size_t i = 0; i < x.v.size(); ++i) {
    T xi = x.v[i], zi = targets.v[i];
    out.v[i] = std::max(xi, T(0)) - xi * zi + std::log1p(std::exp(-std::abs(xi)));
  }
  return make_op<T>(std::move(out), {logits}, [targets](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.val.v.size(); ++i) {
      T sig = T(1) / (T(1) + std::exp(-p.val.v[i]));
      p.grad.v[i] += self.grad.v[i] * (sig - targets.v[i]);
    }
  });
}

// Elementwise smooth L1: 0.5 e^2 / beta if |e| < beta, else |e| - 0.5 beta.
template <typename T>
Var<T> smooth_l1(const Var<T>& pred, const Tensor<T>& target, T beta) {
  require_same_shape(pred.val(), target, "smooth_l1");
  check_config(beta > T(0), "smooth_l1: beta must be positive");
  Tensor<T> out(pred.val().shape);
  const auto& x = pred.val();
  for (size_t i = 0; i < x.v.size(); ++i) {
    T e = x.v[i] - target.v[i];
    T a = std::abs(e);
    out.v[i] = a < beta ? T(0.5) * e * e / beta : a - T(0.5) * beta;
  }
  return make_op<T>(std::move(out), {pred}, [target, beta](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.val.v.size(); ++i) {
      T e = p.val.v[i] - target.v[i];
      T d = std::abs(e) < beta ? e / beta : (e > T(0) ? T(1) : T(-1));
      p.grad.v[i] += self.grad.v[i] * d;
    }
  });
}

}  // namespace light
