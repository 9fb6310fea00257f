#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "light/common.hpp"

namespace light {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double area() const { return std::max(0.0, w()) * std::max(0.0, h()); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

inline double box_iou(const Box& a, const Box& b) {
  double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  double inter = std::max(0.0, ix2 - ix1) * std::max(0.0, iy2 - iy1);
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline Box clip_box(const Box& b, double width, double height) {
  Box o;
  o.x1 = std::min(std::max(b.x1, 0.0), width);
  o.y1 = std::min(std::max(b.y1, 0.0), height);
  o.x2 = std::min(std::max(b.x2, 0.0), width);
  o.y2 = std::min(std::max(b.y2, 0.0), height);
  return o;
}

struct Anchor {
  double cx = 0, cy = 0, w = 0, h = 0;
  int level = 0;

  Box box() const { return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}; }
};

// Anchors tile each level on its stride grid, ordered (y, x, ratio) per
// level, levels in pyramid order. One scale per level.
inline std::vector<Anchor> generate_anchors(const std::vector<std::array<int, 3>>& level_hws,
                                            const std::vector<double>& scales,
                                            const std::vector<double>& ratios) {
  // level_hws entries are {H, W, stride}.
  check_config(scales.size() == level_hws.size(), "anchors: one scale per level required");
  std::vector<Anchor> anchors;
  for (size_t l = 0; l < level_hws.size(); ++l) {
    auto [h, w, stride] = level_hws[l];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (double r : ratios) {
          Anchor a;
          a.cx = (x + 0.5) * stride;
          a.cy = (y + 0.5) * stride;
          a.w = scales[l] * std::sqrt(1.0 / r);
          a.h = scales[l] * std::sqrt(r);
          a.level = static_cast<int>(l);
          anchors.push_back(a);
        }
  }
  return anchors;
}

using BoxDelta = std::array<double, 4>;  // (tx, ty, tw, th)

inline BoxDelta encode_box(const Box& b, const Anchor& a) {
  check_shape(a.w > 0 && a.h > 0, "encode_box: anchor must have positive size");
  return {(b.cx() - a.cx) / a.w, (b.cy() - a.cy) / a.h, std::log(b.w() / a.w),
          std::log(b.h() / a.h)};
}

inline Box decode_box(const BoxDelta& d, const Anchor& a) {
  // Clamp exp scale like the parent design to avoid blowing up early boxes.
  static const double kMaxScale = std::log(1000.0 / 16.0);
  double cx = a.cx + d[0] * a.w;
  double cy = a.cy + d[1] * a.h;
  double w = a.w * std::exp(std::min(d[2], kMaxScale));
  double h = a.h * std::exp(std::min(d[3], kMaxScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

// Greedy NMS. Input order is (score desc, index asc); returns indices into
// the input vectors of the surviving boxes, in that order.
inline std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                            double iou_thresh) {
  check_shape(boxes.size() == scores.size(), "nms: boxes/scores size mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return scores[i] > scores[j]; });
  std::vector<int> keep;
  std::vector<char> suppressed(boxes.size(), 0);
  for (size_t i = 0; i < order.size(); ++i) {
    int a = order[i];
    if (suppressed[a]) continue;
    keep.push_back(a);
    for (size_t j = i + 1; j < order.size(); ++j) {
      int b = order[j];
      if (!suppressed[b] && box_iou(boxes[a], boxes[b]) >= iou_thresh) suppressed[b] = 1;
    }
  }
  return keep;
}

// FPN level assignment: floor(k0 + log2(sqrt(area)/224)), clamped.
inline int assign_level(const Box& b, int n_levels, int k0 = 2) {
  double s = std::sqrt(std::max(b.area(), 1e-12));
  int k = static_cast<int>(std::floor(k0 + std::log2(s / 224.0)));
  return std::min(std::max(k, 0), n_levels - 1);
}

}  // namespace light
