#pragma once

#include <Eigen/Dense>

#include "light/autodiff.hpp"

namespace light {

enum class PadMode { Zero, Replicate };

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// col is (Cin*kh*kw) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* img, int cin, int h, int w, int kh, int kw, int stride, int pad,
            PadMode mode, int ho, int wo, T* col) {
  const bool repl = mode == PadMode::Replicate;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) *
                           (static_cast<size_t>(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (repl) iy = clampi(iy, 0, h - 1);
          if (iy < 0 || iy >= h) {
            std::fill(row + static_cast<size_t>(oy) * wo, row + static_cast<size_t>(oy + 1) * wo, T(0));
            continue;
          }
          const T* src = img + (static_cast<size_t>(c) * h + iy) * w;
          T* dst = row + static_cast<size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (repl) ix = clampi(ix, 0, w - 1);
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accum(const T* col, int cin, int h, int w, int kh, int kw, int stride,
                  int pad, PadMode mode, int ho, int wo, T* img) {
  const bool repl = mode == PadMode::Replicate;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) *
                                 (static_cast<size_t>(ho) * wo);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (repl) iy = clampi(iy, 0, h - 1);
          if (iy < 0 || iy >= h) continue;
          T* dst = img + (static_cast<size_t>(c) * h + iy) * w;
          const T* src = row + static_cast<size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (repl) ix = clampi(ix, 0, w - 1);
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, NCHW. bias may be an undefined Var for bias-free layers.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad,
               PadMode pad_mode = PadMode::Zero) {
  const auto& xs = x.val().shape;
  const auto& ws = w.val().shape;
  check_shape(xs.size() == 4 && ws.size() == 4, "conv2d: need 4-D input and weight");
  check_shape(xs[1] == ws[1], "conv2d: channel mismatch, input " + x.val().shape_str() +
                                  " weight " + w.val().shape_str());
  int n = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  int cout = ws[0], kh = ws[2], kw = ws[3];
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  check_shape(ho > 0 && wo > 0, "conv2d: output would be empty");
  const bool has_bias = bias.defined();
  if (has_bias)
    check_shape(bias.val().ndim() == 1 && bias.val().dim(0) == cout, "conv2d: bias shape");

  int K = cin * kh * kw;
  size_t M = static_cast<size_t>(ho) * wo;
  Tensor<T> out({n, cout, ho, wo});
  std::vector<T> col(static_cast<size_t>(K) * M);
  detail::CMapRM<T> wm(w.val().data(), cout, K);
  for (int b = 0; b < n; ++b) {
    detail::im2col(x.val().data() + static_cast<size_t>(b) * cin * h * wd, cin, h, wd,
                   kh, kw, stride, pad, pad_mode, ho, wo, col.data());
    detail::CMapRM<T> cm(col.data(), K, static_cast<Eigen::Index>(M));
    detail::MapRM<T> om(out.data() + static_cast<size_t>(b) * cout * M, cout,
                        static_cast<Eigen::Index>(M));
    om.noalias() = wm * cm;
    if (has_bias) {
      for (int c = 0; c < cout; ++c) {
        T bv = bias.val()[c];
        T* dst = out.data() + (static_cast<size_t>(b) * cout + c) * M;
        for (size_t i = 0; i < M; ++i) dst[i] += bv;
      }
    }
  }

  std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, bias}
                                         : std::vector<Var<T>>{x, w};
  auto back = [stride, pad, pad_mode, n, cin, h, wd, cout, kh, kw, ho, wo, K, M,
               has_bias](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    std::vector<T> col(static_cast<size_t>(K) * M);
    std::vector<T> dcol;
    if (px.requires_grad) {
      dcol.resize(static_cast<size_t>(K) * M);
      px.ensure_grad();
    }
    if (pw.requires_grad) pw.ensure_grad();
    detail::CMapRM<T> wm(pw.val.data(), cout, K);
    for (int b = 0; b < n; ++b) {
      detail::CMapRM<T> gm(self.grad.data() + static_cast<size_t>(b) * cout * M, cout,
                           static_cast<Eigen::Index>(M));
      if (pw.requires_grad) {
        detail::im2col(px.val.data() + static_cast<size_t>(b) * cin * h * wd, cin, h,
                       wd, kh, kw, stride, pad, pad_mode, ho, wo, col.data());
        detail::CMapRM<T> cm(col.data(), K, static_cast<Eigen::Index>(M));
        detail::MapRM<T> dwm(pw.grad.data(), cout, K);
        dwm.noalias() += gm * cm.transpose();
      }
      if (px.requires_grad) {
        detail::MapRM<T> dcm(dcol.data(), K, static_cast<Eigen::Index>(M));
        dcm.noalias() = wm.transpose() * gm;
        detail::col2im_accum(dcol.data(), cin, h, wd, kh, kw, stride, pad, pad_mode, ho, wo,
                             px.grad.data() + static_cast<size_t>(b) * cin * h * wd);
      }
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& pb = *self.parents[2];
      pb.ensure_grad();
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < cout; ++c) {
          const T* src = self.grad.data() + (static_cast<size_t>(b) * cout + c) * M;
          T s = T(0);
          for (size_t i = 0; i < M; ++i) s += src[i];
          pb.grad[c] += s;
        }
    }
  };
  return make_op<T>(std::move(out), parents, back);
}

// Fully connected: x (N,Fin), w (Fout,Fin), bias (Fout) -> (N,Fout).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  check_shape(x.val().ndim() == 2 && w.val().ndim() == 2, "linear: need 2-D operands");
  int n = x.val().dim(0), fin = x.val().dim(1), fout = w.val().dim(0);
  check_shape(w.val().dim(1) == fin, "linear: weight/input width mismatch");
  const bool has_bias = bias.defined();
  Tensor<T> out({n, fout});
  detail::CMapRM<T> xm(x.val().data(), n, fin);
  detail::CMapRM<T> wm(w.val().data(), fout, fin);
  detail::MapRM<T> om(out.data(), n, fout);
  om.noalias() = xm * wm.transpose();
  if (has_bias)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < fout; ++j) out.at(i, j) += bias.val()[j];

  std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, bias}
                                         : std::vector<Var<T>>{x, w};
  auto back = [n, fin, fout, has_bias](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    detail::CMapRM<T> gm(self.grad.data(), n, fout);
    if (px.requires_grad) {
      px.ensure_grad();
      detail::CMapRM<T> wm(pw.val.data(), fout, fin);
      detail::MapRM<T> dxm(px.grad.data(), n, fin);
      dxm.noalias() += gm * wm;
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      detail::CMapRM<T> xm(px.val.data(), n, fin);
      detail::MapRM<T> dwm(pw.grad.data(), fout, fin);
      dwm.noalias() += gm.transpose() * xm;
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& pb = *self.parents[2];
      pb.ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < fout; ++j) pb.grad[j] += self.grad[static_cast<size_t>(i) * fout + j];
    }
  };
  return make_op<T>(std::move(out), parents, back);
}

}  // namespace light
