#pragma once

#include "light/autodiff.hpp"

namespace light {

// Batch normalization over (N,H,W) per channel. Running statistics live
// outside the graph and are updated in place on training-mode forwards.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                  T momentum = T(0.1), T eps = T(1e-5)) {
  const auto& xs = x.val().shape;
  check_shape(xs.size() == 4, "batch_norm: need 4-D input");
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  check_shape(gamma.val().numel() == static_cast<size_t>(c) &&
                  beta.val().numel() == static_cast<size_t>(c),
              "batch_norm: affine parameter size");
  size_t plane = static_cast<size_t>(h) * w;
  size_t m = static_cast<size_t>(n) * plane;

  std::vector<T> mean(c), invstd(c);
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      T s = T(0);
      for (int b = 0; b < n; ++b) {
        const T* p = x.val().data() + (static_cast<size_t>(b) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) s += p[i];
      }
      T mu = s / static_cast<T>(m);
      T sv = T(0);
      for (int b = 0; b < n; ++b) {
        const T* p = x.val().data() + (static_cast<size_t>(b) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          T d = p[i] - mu;
          sv += d * d;
        }
      }
      T var = sv / static_cast<T>(m);
      mean[ch] = mu;
      invstd[ch] = T(1) / std::sqrt(var + eps);
      T unbiased = m > 1 ? sv / static_cast<T>(m - 1) : var;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> out(xs);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* p = x.val().data() + (static_cast<size_t>(b) * c + ch) * plane;
      T* o = out.data() + (static_cast<size_t>(b) * c + ch) * plane;
      T g = gamma.val()[ch], bt = beta.val()[ch], mu = mean[ch], is = invstd[ch];
      for (size_t i = 0; i < plane; ++i) o[i] = (p[i] - mu) * is * g + bt;
    }

  auto back = [n, c, plane, m, mean, invstd, training](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      T mu = mean[ch], is = invstd[ch], g = pg.val[ch];
      // Channel sums of dy and dy*xhat.
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int b = 0; b < n; ++b) {
        const T* dy = self.grad.data() + (static_cast<size_t>(b) * c + ch) * plane;
        const T* xv = px.val.data() + (static_cast<size_t>(b) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * (xv[i] - mu) * is;
        }
      }
      if (pg.requires_grad) pg.grad[ch] += sum_dy_xhat;
      if (pb.requires_grad) pb.grad[ch] += sum_dy;
      if (!px.requires_grad) continue;
      if (training) {
        T inv_m = T(1) / static_cast<T>(m);
        for (int b = 0; b < n; ++b) {
          const T* dy = self.grad.data() + (static_cast<size_t>(b) * c + ch) * plane;
          const T* xv = px.val.data() + (static_cast<size_t>(b) * c + ch) * plane;
          T* dx = px.grad.data() + (static_cast<size_t>(b) * c + ch) * plane;
          for (size_t i = 0; i < plane; ++i) {
            T xhat = (xv[i] - mu) * is;
            dx[i] += g * is * (dy[i] - sum_dy * inv_m - xhat * sum_dy_xhat * inv_m);
          }
        }
      } else {
        for (int b = 0; b < n; ++b) {
          const T* dy = self.grad.data() + (static_cast<size_t>(b) * c + ch) * plane;
          T* dx = px.grad.data() + (static_cast<size_t>(b) * c + ch) * plane;
          for (size_t i = 0; i < plane; ++i) dx[i] += dy[i] * g * is;
        }
      }
    }
  };
  return make_op<T>(std::move(out), {x, gamma, beta}, back);
}

}  // namespace light
