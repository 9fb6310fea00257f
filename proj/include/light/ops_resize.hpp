#pragma once

#include <cmath>

#include "light/autodiff.hpp"

namespace light {

namespace detail {

// Half-pixel source mapping (align_corners = false). Returns base index and
// interpolation weight toward base+1; indices pre-clamped to the valid range.
inline void bilin_coeffs(int out_size, int in_size, int i, int& i0, int& i1, double& w) {
  double scale = static_cast<double>(in_size) / out_size;
  double src = (i + 0.5) * scale - 0.5;
  if (src < 0) src = 0;
  i0 = static_cast<int>(src);
  if (i0 > in_size - 1) i0 = in_size - 1;
  i1 = i0 + 1 < in_size ? i0 + 1 : in_size - 1;
  w = src - i0;
}

}  // namespace detail

// Bilinear resize of an NCHW map to (ho, wo).
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int ho, int wo) {
  const auto& xs = x.val().shape;
  check_shape(xs.size() == 4, "bilinear_resize: need 4-D input");
  check_shape(ho > 0 && wo > 0, "bilinear_resize: bad target size");
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (ho == h && wo == w) {
    // Identity resize is exact by contract.
    Tensor<T> out = x.val();
    return make_op<T>(std::move(out), {x},
                      [](Node<T>& self) { self.parents[0]->accumulate(self.grad); });
  }

  std::vector<int> y0(ho), y1(ho), x0(wo), x1(wo);
  std::vector<T> wy(ho), wx(wo);
  for (int i = 0; i < ho; ++i) {
    double ww;
    detail::bilin_coeffs(ho, h, i, y0[i], y1[i], ww);
    wy[i] = static_cast<T>(ww);
  }
  for (int i = 0; i < wo; ++i) {
    double ww;
    detail::bilin_coeffs(wo, w, i, x0[i], x1[i], ww);
    wx[i] = static_cast<T>(ww);
  }

  Tensor<T> out({n, c, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.val().data() + (static_cast<size_t>(b) * c + ch) * h * w;
      T* dst = out.data() + (static_cast<size_t>(b) * c + ch) * ho * wo;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T a = src[y0[oy] * w + x0[ox]], bv = src[y0[oy] * w + x1[ox]];
          T cc = src[y1[oy] * w + x0[ox]], d = src[y1[oy] * w + x1[ox]];
          T top = a + (bv - a) * wx[ox];
          T bot = cc + (d - cc) * wx[ox];
          dst[static_cast<size_t>(oy) * wo + ox] = top + (bot - top) * wy[oy];
        }
    }

  auto back = [n, c, h, w, ho, wo, y0, y1, x0, x1, wy, wx](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        T* dst = p.grad.data() + (static_cast<size_t>(b) * c + ch) * h * w;
        const T* g = self.grad.data() + (static_cast<size_t>(b) * c + ch) * ho * wo;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            T gv = g[static_cast<size_t>(oy) * wo + ox];
            T wyv = wy[oy], wxv = wx[ox];
            dst[y0[oy] * w + x0[ox]] += gv * (T(1) - wyv) * (T(1) - wxv);
            dst[y0[oy] * w + x1[ox]] += gv * (T(1) - wyv) * wxv;
            dst[y1[oy] * w + x0[ox]] += gv * wyv * (T(1) - wxv);
            dst[y1[oy] * w + x1[ox]] += gv * wyv * wxv;
          }
      }
  };
  return make_op<T>(std::move(out), {x}, back);
}

// Nearest-neighbor resize (used by the top-down pyramid merge).
template <typename T>
Var<T> nearest_resize(const Var<T>& x, int ho, int wo) {
  const auto& xs = x.val().shape;
  check_shape(xs.size() == 4, "nearest_resize: need 4-D input");
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  std::vector<int> ys(ho), xsrc(wo);
  for (int i = 0; i < ho; ++i) ys[i] = static_cast<int>(static_cast<int64_t>(i) * h / ho);
  for (int i = 0; i < wo; ++i) xsrc[i] = static_cast<int>(static_cast<int64_t>(i) * w / wo);
  Tensor<T> out({n, c, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.val().data() + (static_cast<size_t>(b) * c + ch) * h * w;
      T* dst = out.data() + (static_cast<size_t>(b) * c + ch) * ho * wo;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          dst[static_cast<size_t>(oy) * wo + ox] = src[ys[oy] * w + xsrc[ox]];
    }
  auto back = [n, c, h, w, ho, wo, ys, xsrc](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        T* dst = p.grad.data() + (static_cast<size_t>(b) * c + ch) * h * w;
        const T* g = self.grad.data() + (static_cast<size_t>(b) * c + ch) * ho * wo;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox)
            dst[ys[oy] * w + xsrc[ox]] += g[static_cast<size_t>(oy) * wo + ox];
      }
  };
  return make_op<T>(std::move(out), {x}, back);
}

// Adaptive average pooling to (k, k).
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, int k) {
  const auto& xs = x.val().shape;
  check_shape(xs.size() == 4, "adaptive_avg_pool: need 4-D input");
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  check_config(k >= 1 && k <= h && k <= w,
               "adaptive_avg_pool: bin count " + std::to_string(k) +
                   " exceeds input size " + x.val().shape_str());
  auto lo = [](int i, int in, int out) { return (i * in) / out; };
  auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
  Tensor<T> out({n, c, k, k});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.val().data() + (static_cast<size_t>(b) * c + ch) * h * w;
      for (int oy = 0; oy < k; ++oy)
        for (int ox = 0; ox < k; ++ox) {
          int y0 = lo(oy, h, k), y1 = hi(oy, h, k);
          int x0 = lo(ox, w, k), x1 = hi(ox, w, k);
          T s = T(0);
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) s += src[y * w + xx];
          out.at(b, ch, oy, ox) = s / static_cast<T>((y1 - y0) * (x1 - x0));
        }
    }
  auto back = [n, c, h, w, k, lo, hi](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        T* dst = p.grad.data() + (static_cast<size_t>(b) * c + ch) * h * w;
        for (int oy = 0; oy < k; ++oy)
          for (int ox = 0; ox < k; ++ox) {
            int y0 = lo(oy, h, k), y1 = hi(oy, h, k);
            int x0 = lo(ox, w, k), x1 = hi(ox, w, k);
            T g = self.grad.at(b, ch, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) dst[y * w + xx] += g;
          }
      }
  };
  return make_op<T>(std::move(out), {x}, back);
}

}  // namespace light
