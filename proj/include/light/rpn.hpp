#pragma once

#include "light/boxes.hpp"
#include "light/modules.hpp"

namespace light {

// Region proposal head shared across pyramid levels: one 3x3 conv followed by
// sibling 1x1 objectness and box-delta heads. Objectness is a logit; callers
// apply sigmoid where scores are needed.
template <typename T>
struct RpnHead {
  Conv2d<T> conv, obj, delta;
  int n_anchors = 3;

  RpnHead() = default;
  RpnHead(ParamRegistry<T>& reg, int channels, int anchors_per_cell, Rng& rng)
      : n_anchors(anchors_per_cell) {
    conv = Conv2d<T>(reg, "rpn.conv", channels, channels, 3, 1, 1, rng);
    obj = Conv2d<T>(reg, "rpn.obj", channels, n_anchors, 1, 1, 0, rng, true, 0.01);
    delta = Conv2d<T>(reg, "rpn.delta", channels, 4 * n_anchors, 1, 1, 0, rng, true, 0.01);
  }

  struct LevelOut {
    Var<T> objectness;  // (N, A, H, W) logits
    Var<T> deltas;      // (N, 4A, H, W)
  };

  std::vector<LevelOut> operator()(const std::vector<Var<T>>& levels) const {
    std::vector<LevelOut> outs;
    for (auto& l : levels) {
      auto shared = relu(conv(l));
      outs.push_back({obj(shared), delta(shared)});
    }
    return outs;
  }
};

struct Proposal {
  Box box;
  double score = 0;
};

struct ProposalConfig {
  int pre_nms = 1000;
  int post_nms = 256;
  double nms_iou = 0.7;
  double min_size = 1.0;
};

// Top pre_nms anchors by objectness, decoded, clipped, degenerate boxes
// dropped, greedy NMS, top post_nms kept. Scores are sigmoid(objectness).
inline std::vector<Proposal> select_proposals(const std::vector<double>& objectness_logits,
                                              const std::vector<BoxDelta>& deltas,
                                              const std::vector<Anchor>& anchors,
                                              double img_w, double img_h,
                                              const ProposalConfig& cfg) {
  check_shape(objectness_logits.size() == anchors.size() && deltas.size() == anchors.size(),
              "select_proposals: per-anchor arrays must align");
  std::vector<int> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return objectness_logits[a] > objectness_logits[b];
  });
  if (static_cast<int>(order.size()) > cfg.pre_nms) order.resize(cfg.pre_nms);

  std::vector<Box> boxes;
  std::vector<double> scores;
  for (int i : order) {
    Box b = clip_box(decode_box(deltas[i], anchors[i]), img_w, img_h);
    if (b.w() < cfg.min_size || b.h() < cfg.min_size) continue;
    boxes.push_back(b);
    scores.push_back(1.0 / (1.0 + std::exp(-objectness_logits[i])));
  }
  auto keep = nms(boxes, scores, cfg.nms_iou);
  if (static_cast<int>(keep.size()) > cfg.post_nms) keep.resize(cfg.post_nms);
  std::vector<Proposal> out;
  for (int k : keep) out.push_back({boxes[k], scores[k]});
  return out;
}

}  // namespace light
