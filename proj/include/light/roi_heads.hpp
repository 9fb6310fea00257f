#pragma once

#include "light/boxes.hpp"
#include "light/modules.hpp"
#include "light/ops_resize.hpp"
#include "light/ops_roialign.hpp"
#include "light/types.hpp"

namespace light {

// Two hidden FC layers with sibling class-logit and box-delta outputs.
// Single foreground class, class-agnostic regression.
template <typename T>
struct BoxHead {
  Linear<T> fc1, fc2, cls, reg;
  int pooled = 7, channels = 0;

  BoxHead() = default;
  BoxHead(ParamRegistry<T>& reg_, int channels_, int pooled_, int fc_dim, Rng& rng)
      : pooled(pooled_), channels(channels_) {
    int fin = channels * pooled * pooled;
    fc1 = Linear<T>(reg_, "box_head.fc1", fin, fc_dim, rng);
    fc2 = Linear<T>(reg_, "box_head.fc2", fc_dim, fc_dim, rng);
    cls = Linear<T>(reg_, "box_head.cls", fc_dim, 1, rng, 0.01);
    reg = Linear<T>(reg_, "box_head.reg", fc_dim, 4, rng, 0.001);
  }

  // pooled features (R, C, p, p) -> {class logits (R,1), deltas (R,4)}.
  std::pair<Var<T>, Var<T>> operator()(const Var<T>& x) const {
    int r = x.val().dim(0);
    auto flat = reshape(x, {r, channels * pooled * pooled});
    auto h = relu(fc2(relu(fc1(flat))));
    return {cls(h), reg(h)};
  }
};

// Four 3x3 convs, a 2x nearest upsample followed by a 3x3 conv, then a 1x1
// conv to single-channel mask logits (14x14 pooled input -> 28x28 logits).
template <typename T>
struct MaskHead {
  std::vector<Conv2d<T>> convs;
  Conv2d<T> up_conv, out_conv;

  MaskHead() = default;
  MaskHead(ParamRegistry<T>& reg, int channels, Rng& rng) {
    for (int i = 0; i < 4; ++i)
      convs.emplace_back(reg, "mask_head.c" + std::to_string(i), channels, channels, 3, 1, 1,
                         rng);
    up_conv = Conv2d<T>(reg, "mask_head.up", channels, channels, 3, 1, 1, rng);
    out_conv = Conv2d<T>(reg, "mask_head.out", channels, 1, 1, 1, 0, rng, true, 0.01);
  }

  Var<T> operator()(const Var<T>& x) const {
    auto h = x;
    for (auto& c : convs) h = relu(c(h));
    h = nearest_resize(h, x.val().dim(2) * 2, x.val().dim(3) * 2);
    h = relu(up_conv(h));
    return out_conv(h);
  }
};

// ---- training-time matching ----

struct MatchLabels {
  std::vector<int> gt;         // >=0 matched GT index, -1 negative, -2 ignored
  std::vector<double> max_iou;
};

// IoU matching with positive/negative thresholds; candidates between the
// thresholds are ignored. force_best keeps at least one positive per GT
// (the RPN convention).
inline MatchLabels match_by_iou(const std::vector<Box>& cands, const std::vector<Box>& gts,
                                double pos_thr, double neg_thr, bool force_best) {
  MatchLabels m;
  m.gt.assign(cands.size(), -1);
  m.max_iou.assign(cands.size(), 0.0);
  if (gts.empty()) return m;
  std::vector<double> best_per_gt(gts.size(), 0.0);
  for (size_t i = 0; i < cands.size(); ++i) {
    double best = 0.0;
    int best_j = -1;
    for (size_t j = 0; j < gts.size(); ++j) {
      double iou = box_iou(cands[i], gts[j]);
      if (iou > best) {
        best = iou;
        best_j = static_cast<int>(j);
      }
      best_per_gt[j] = std::max(best_per_gt[j], iou);
    }
    m.max_iou[i] = best;
    if (best >= pos_thr)
      m.gt[i] = best_j;
    else if (best >= neg_thr)
      m.gt[i] = -2;
  }
  if (force_best) {
    for (size_t j = 0; j < gts.size(); ++j) {
      if (best_per_gt[j] <= 0.0) continue;
      // Mark every candidate achieving the per-GT best IoU as positive.
      for (size_t i = 0; i < cands.size(); ++i)
        if (box_iou(cands[i], gts[j]) == best_per_gt[j] && m.gt[i] < 0)
          m.gt[i] = static_cast<int>(j);
    }
  }
  return m;
}

// Samples up to `total` candidates with at most total*pos_fraction positives,
// filling the remainder with negatives. Returns indices; is_pos aligns with
// them.
inline std::vector<int> sample_balanced(const MatchLabels& m, int total, double pos_fraction,
                                        Rng& rng, std::vector<char>& is_pos) {
  std::vector<int> pos, neg;
  for (size_t i = 0; i < m.gt.size(); ++i) {
    if (m.gt[i] >= 0)
      pos.push_back(static_cast<int>(i));
    else if (m.gt[i] == -1)
      neg.push_back(static_cast<int>(i));
  }
  auto subsample = [&rng](std::vector<int>& v, size_t n) {
    for (size_t i = 0; i < n && i + 1 < v.size(); ++i) {
      size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(v.size() - i) - 1));
      std::swap(v[i], v[j]);
    }
    if (v.size() > n) v.resize(n);
  };
  size_t max_pos = static_cast<size_t>(total * pos_fraction);
  if (pos.size() > max_pos) subsample(pos, max_pos);
  size_t max_neg = static_cast<size_t>(total) - pos.size();
  if (neg.size() > max_neg) subsample(neg, max_neg);
  std::vector<int> out;
  is_pos.clear();
  for (int i : pos) {
    out.push_back(i);
    is_pos.push_back(1);
  }
  for (int i : neg) {
    out.push_back(i);
    is_pos.push_back(0);
  }
  return out;
}

// ---- mask cropping and pasting ----

// Crops a full-image 0/1 mask to `box` and resamples it to size x size
// (bilinear on the binary field, then thresholded at 0.5).
template <typename T>
Tensor<T> mask_roi_target(const Tensor<uint8_t>& gt_mask, const Box& box, int size) {
  int h = gt_mask.dim(0), w = gt_mask.dim(1);
  Tensor<T> out({size, size});
  double bw = box.w() / size, bh = box.h() / size;
  for (int oy = 0; oy < size; ++oy)
    for (int ox = 0; ox < size; ++ox) {
      double sx = box.x1 + (ox + 0.5) * bw - 0.5;
      double sy = box.y1 + (oy + 0.5) * bh - 0.5;
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      double fx = sx - x0, fy = sy - y0;
      auto at = [&](int yy, int xx) -> double {
        yy = std::min(std::max(yy, 0), h - 1);
        xx = std::min(std::max(xx, 0), w - 1);
        return gt_mask.v[static_cast<size_t>(yy) * w + xx];
      };
      double v = at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
                 at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
      out.v[static_cast<size_t>(oy) * size + ox] = v >= 0.5 ? T(1) : T(0);
    }
  return out;
}

// Resamples per-roi mask probabilities into the image rectangle and
// binarizes at 0.5.
inline Tensor<uint8_t> paste_mask(const Tensor<float>& probs, const Box& box, int img_w,
                                  int img_h) {
  int ms = probs.dim(probs.ndim() - 1);
  Tensor<uint8_t> out({img_h, img_w});
  int x_lo = std::max(0, static_cast<int>(std::floor(box.x1)));
  int y_lo = std::max(0, static_cast<int>(std::floor(box.y1)));
  int x_hi = std::min(img_w, static_cast<int>(std::ceil(box.x2)));
  int y_hi = std::min(img_h, static_cast<int>(std::ceil(box.y2)));
  double sx = ms / std::max(box.w(), 1e-9), sy = ms / std::max(box.h(), 1e-9);
  const float* p = probs.data();
  for (int py = y_lo; py < y_hi; ++py)
    for (int px = x_lo; px < x_hi; ++px) {
      double cx = px + 0.5, cy = py + 0.5;
      if (cx < box.x1 || cx >= box.x2 || cy < box.y1 || cy >= box.y2) continue;
      double u = (cx - box.x1) * sx - 0.5;
      double v = (cy - box.y1) * sy - 0.5;
      int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
      double fu = u - u0, fv = v - v0;
      auto at = [&](int yy, int xx) -> double {
        yy = std::min(std::max(yy, 0), ms - 1);
        xx = std::min(std::max(xx, 0), ms - 1);
        return p[static_cast<size_t>(yy) * ms + xx];
      };
      double val = at(v0, u0) * (1 - fv) * (1 - fu) + at(v0, u0 + 1) * (1 - fv) * fu +
                   at(v0 + 1, u0) * fv * (1 - fu) + at(v0 + 1, u0 + 1) * fv * fu;
      if (val >= 0.5) out.v[static_cast<size_t>(py) * img_w + px] = 1;
    }
  return out;
}

// ---- final detection selection ----

struct RawDetection {
  Box box;
  double score = 0;
  Tensor<float> mask_probs;  // (m, m), optional until pasting
};

struct PostprocessConfig {
  double score_thresh = 0.05;
  double nms_iou = 0.5;
  int max_det = 100;
};

// Score threshold, greedy NMS, top-k. Returns surviving indices sorted by
// descending score.
inline std::vector<int> select_detections(const std::vector<Box>& boxes,
                                          const std::vector<double>& scores,
                                          const PostprocessConfig& cfg) {
  std::vector<Box> kept_boxes;
  std::vector<double> kept_scores;
  std::vector<int> orig;
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (scores[i] < cfg.score_thresh) continue;
    kept_boxes.push_back(boxes[i]);
    kept_scores.push_back(scores[i]);
    orig.push_back(static_cast<int>(i));
  }
  auto keep = nms(kept_boxes, kept_scores, cfg.nms_iou);
  if (static_cast<int>(keep.size()) > cfg.max_det) keep.resize(cfg.max_det);
  std::vector<int> out;
  for (int k : keep) out.push_back(orig[k]);
  return out;
}

inline InstanceSet postprocess(const std::vector<RawDetection>& raw, int img_w, int img_h,
                               const PostprocessConfig& cfg) {
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (auto& d : raw) {
    boxes.push_back(clip_box(d.box, img_w, img_h));
    scores.push_back(d.score);
  }
  InstanceSet set;
  set.width = img_w;
  set.height = img_h;
  for (int idx : select_detections(boxes, scores, cfg)) {
    Instance inst;
    inst.box = boxes[idx];
    inst.score = scores[idx];
    if (raw[idx].mask_probs.numel() > 0)
      inst.mask = paste_mask(raw[idx].mask_probs, inst.box, img_w, img_h);
    set.items.push_back(std::move(inst));
  }
  return set;
}

}  // namespace light
