#pragma once

#include "light/ops_loss.hpp"

namespace light {

struct LossWeights {
  double det = 1.0, mask = 1.0, height = 1.0;

  void validate() const {
    check_config(std::isfinite(det) && std::isfinite(mask) && std::isfinite(height) &&
                     det >= 0 && mask >= 0 && height >= 0,
                 "loss weights must be finite and nonnegative");
  }
};

// Scalar loss values for logging. total = l1*det + l2*mask + l3*height.
struct LossReport {
  double det = 0, mask = 0, height = 0, total = 0;
};

template <typename T>
Var<T> zero_scalar() {
  return Var<T>::constant(Tensor<T>::scalar(T(0)));
}

// Mean BCE over rows of logits against 0/1 targets. Empty input -> 0.
template <typename T>
Var<T> classification_loss(const Var<T>& logits, const Tensor<T>& targets) {
  if (logits.val().numel() == 0) return zero_scalar<T>();
  return mean_all(bce_with_logits(logits, targets));
}

// Smooth-L1 over positive box regressions: coordinate losses are summed per
// box and averaged over boxes. Empty input -> 0.
template <typename T>
Var<T> box_regression_loss(const Var<T>& pred, const Tensor<T>& targets, T beta) {
  if (pred.val().numel() == 0) return zero_scalar<T>();
  int n_boxes = pred.val().dim(0);
  auto per_elem = smooth_l1(pred, targets, beta);
  return mul_scalar(sum_all(per_elem), T(1) / static_cast<T>(n_boxes));
}

// RPN objectness/box plus RoI class/box terms. Each term is normalized by
// its own sample count.
template <typename T>
struct DetectionLossInputs {
  Var<T> rpn_obj_logits;       // (S, 1) sampled anchors
  Tensor<T> rpn_obj_targets;   // 0/1
  Var<T> rpn_box_pred;         // (P, 4) positive anchors
  Tensor<T> rpn_box_targets;   // encoded regression targets
  Var<T> roi_cls_logits;       // (S2, 1) sampled proposals
  Tensor<T> roi_cls_targets;
  Var<T> roi_box_pred;         // (P2, 4) positive proposals
  Tensor<T> roi_box_targets;
};

template <typename T>
Var<T> detection_loss(const DetectionLossInputs<T>& in, T rpn_beta = T(1.0 / 9.0),
                      T roi_beta = T(1.0)) {
  auto loss = classification_loss(in.rpn_obj_logits, in.rpn_obj_targets);
  if (in.rpn_box_pred.defined())
    loss = add(loss, box_regression_loss(in.rpn_box_pred, in.rpn_box_targets, rpn_beta));
  if (in.roi_cls_logits.defined())
    loss = add(loss, classification_loss(in.roi_cls_logits, in.roi_cls_targets));
  if (in.roi_box_pred.defined())
    loss = add(loss, box_regression_loss(in.roi_box_pred, in.roi_box_targets, roi_beta));
  return loss;
}

// Mean per-pixel BCE over positive-RoI mask logits. Zero positives -> 0.
template <typename T>
Var<T> mask_loss(const Var<T>& mask_logits, const Tensor<T>& targets) {
  if (!mask_logits.defined() || mask_logits.val().numel() == 0) return zero_scalar<T>();
  return mean_all(bce_with_logits(mask_logits, targets));
}

// Smooth-L1 over normalized height maps. With a weight mask, the mean runs
// over the masked pixels only (buildings-only supervision).
template <typename T>
Var<T> height_loss(const Var<T>& pred_norm, const Tensor<T>& gt_norm, T beta = T(1),
                   const Tensor<T>* pixel_mask = nullptr) {
  require_same_shape(pred_norm.val(), gt_norm, "height_loss");
  auto per_elem = smooth_l1(pred_norm, gt_norm, beta);
  if (!pixel_mask) return mean_all(per_elem);
  require_same_shape(pred_norm.val(), *pixel_mask, "height_loss mask");
  T count = T(0);
  for (auto v : pixel_mask->v) count += v;
  if (count == T(0)) return zero_scalar<T>();
  auto masked = mul(per_elem, Var<T>::constant(*pixel_mask));
  return mul_scalar(sum_all(masked), T(1) / count);
}

// Weighted sum of the three parts. Non-finite parts abort training with a
// diagnostic naming the part.
template <typename T>
Var<T> total_loss(const Var<T>& det, const Var<T>& mask, const Var<T>& height,
                  const LossWeights& w, LossReport* report = nullptr) {
  w.validate();
  const char* names[3] = {"det", "mask", "height"};
  const Var<T>* parts[3] = {&det, &mask, &height};
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(static_cast<double>(parts[i]->val().v[0])))
      throw Error(ErrorKind::Numeric,
                  std::string("non-finite loss part: ") + names[i]);
  auto out = add(add(mul_scalar(det, static_cast<T>(w.det)),
                     mul_scalar(mask, static_cast<T>(w.mask))),
                 mul_scalar(height, static_cast<T>(w.height)));
  if (report) {
    report->det = det.val().v[0];
    report->mask = mask.val().v[0];
    report->height = height.val().v[0];
    report->total = out.val().v[0];
  }
  return out;
}

}  // namespace light
