#pragma once

#include <cmath>

#include "light/autodiff.hpp"

namespace light {

// Region of interest in image pixels, already assigned to a pyramid level.
struct Roi {
  int batch = 0;
  int level = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

namespace detail {

// Corner indices/weights for one continuous sample position. Positions use
// the half-pixel convention: level pixel (i,j) sits at coordinates (i,j)
// after the caller subtracts 0.5 from scaled box coordinates.
struct BilinSample {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double w00 = 0, w01 = 0, w10 = 0, w11 = 0;
  bool valid = false;
};

inline BilinSample bilin_sample(double y, double x, int h, int w) {
  BilinSample s;
  if (y < -1.0 || y > h || x < -1.0 || x > w) return s;
  if (y < 0) y = 0;
  if (x < 0) x = 0;
  s.y0 = static_cast<int>(y);
  s.x0 = static_cast<int>(x);
  if (s.y0 >= h - 1) {
    s.y0 = s.y1 = h - 1;
    y = s.y0;
  } else {
    s.y1 = s.y0 + 1;
  }
  if (s.x0 >= w - 1) {
    s.x0 = s.x1 = w - 1;
    x = s.x0;
  } else {
    s.x1 = s.x0 + 1;
  }
  double ly = y - s.y0, lx = x - s.x0;
  s.w00 = (1 - ly) * (1 - lx);
  s.w01 = (1 - ly) * lx;
  s.w10 = ly * (1 - lx);
  s.w11 = ly * lx;
  s.valid = true;
  return s;
}

struct RoiGeom {
  double sx, sy, bw, bh;
  int grid;
  double inv_count;
};

inline RoiGeom roi_geom(const Roi& r, int stride, int out_size, int sampling_ratio) {
  RoiGeom g;
  double scale = 1.0 / stride;
  g.sx = r.x1 * scale - 0.5;
  g.sy = r.y1 * scale - 0.5;
  double roi_w = std::max((r.x2 - r.x1) * scale, 1e-8);
  double roi_h = std::max((r.y2 - r.y1) * scale, 1e-8);
  g.bw = roi_w / out_size;
  g.bh = roi_h / out_size;
  g.grid = sampling_ratio > 0 ? sampling_ratio
                              : std::max(1, static_cast<int>(std::ceil(g.bh)));
  g.inv_count = 1.0 / (g.grid * g.grid);
  return g;
}

}  // namespace detail

// RoIAlign over a feature pyramid. Each roi is pooled from its assigned level
// with `sampling_ratio`^2 bilinear samples per bin, averaged. Output is
// (R, C, out_size, out_size). Differentiable w.r.t. the level features only.
template <typename T>
Var<T> roi_align(const std::vector<Var<T>>& levels, const std::vector<int>& strides,
                 const std::vector<Roi>& rois, int out_size, int sampling_ratio = 2) {
  check_shape(!levels.empty() && levels.size() == strides.size(),
              "roi_align: levels/strides mismatch");
  int c = levels[0].val().dim(1);
  for (auto& r : rois) {
    check_shape(r.level >= 0 && r.level < static_cast<int>(levels.size()),
                "roi_align: level out of range");
    if (!(r.x2 > r.x1 && r.y2 > r.y1))
      throw Error(ErrorKind::Config,
                  "roi_align: degenerate box [" + std::to_string(r.x1) + "," +
                      std::to_string(r.y1) + "," + std::to_string(r.x2) + "," +
                      std::to_string(r.y2) + "]");
  }
  int R = static_cast<int>(rois.size());
  Tensor<T> out({R, c, out_size, out_size});

  std::vector<std::pair<int, int>> dims;
  for (auto& l : levels) dims.emplace_back(l.val().dim(2), l.val().dim(3));

  for (int ri = 0; ri < R; ++ri) {
    const Roi& r = rois[ri];
    auto geom = detail::roi_geom(r, strides[r.level], out_size, sampling_ratio);
    int h = dims[r.level].first, w = dims[r.level].second;
    const Tensor<T>& feat = levels[r.level].val();
    for (int by = 0; by < out_size; ++by)
      for (int bx = 0; bx < out_size; ++bx)
        for (int iy = 0; iy < geom.grid; ++iy)
          for (int ix = 0; ix < geom.grid; ++ix) {
            double y = geom.sy + by * geom.bh + geom.bh * (iy + 0.5) / geom.grid;
            double x = geom.sx + bx * geom.bw + geom.bw * (ix + 0.5) / geom.grid;
            auto s = detail::bilin_sample(y, x, h, w);
            if (!s.valid) continue;
            for (int ch = 0; ch < c; ++ch) {
              double v = s.w00 * feat.at(r.batch, ch, s.y0, s.x0) +
                         s.w01 * feat.at(r.batch, ch, s.y0, s.x1) +
                         s.w10 * feat.at(r.batch, ch, s.y1, s.x0) +
                         s.w11 * feat.at(r.batch, ch, s.y1, s.x1);
              out.at(ri, ch, by, bx) += static_cast<T>(v * geom.inv_count);
            }
          }
  }

  auto back = [rois, strides, dims, c, out_size, sampling_ratio](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->ensure_grad();
    for (size_t ri = 0; ri < rois.size(); ++ri) {
      const Roi& r = rois[ri];
      auto& p = *self.parents[r.level];
      if (!p.requires_grad) continue;
      auto geom = detail::roi_geom(r, strides[r.level], out_size, sampling_ratio);
      int h = dims[r.level].first, w = dims[r.level].second;
      for (int by = 0; by < out_size; ++by)
        for (int bx = 0; bx < out_size; ++bx)
          for (int iy = 0; iy < geom.grid; ++iy)
            for (int ix = 0; ix < geom.grid; ++ix) {
              double y = geom.sy + by * geom.bh + geom.bh * (iy + 0.5) / geom.grid;
              double x = geom.sx + bx * geom.bw + geom.bw * (ix + 0.5) / geom.grid;
              auto s = detail::bilin_sample(y, x, h, w);
              if (!s.valid) continue;
              for (int ch = 0; ch < c; ++ch) {
                double gv = self.grad.at(static_cast<int>(ri), ch, by, bx) * geom.inv_count;
                p.grad.at(r.batch, ch, s.y0, s.x0) += static_cast<T>(gv * s.w00);
                p.grad.at(r.batch, ch, s.y0, s.x1) += static_cast<T>(gv * s.w01);
                p.grad.at(r.batch, ch, s.y1, s.x0) += static_cast<T>(gv * s.w10);
                p.grad.at(r.batch, ch, s.y1, s.x1) += static_cast<T>(gv * s.w11);
              }
            }
    }
  };
  return make_op<T>(std::move(out), levels, back);
}

}  // namespace light
