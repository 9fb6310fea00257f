#pragma once

#include <map>

#include "light/feature_extractor.hpp"
#include "light/gcti.hpp"
#include "light/height_branch.hpp"
#include "light/losses.hpp"
#include "light/roi_heads.hpp"
#include "light/rpn.hpp"

namespace light {

enum class TaskMode { JointGcti, Joint, SegOnly, HeightOnly };

inline std::string task_mode_name(TaskMode m) {
  switch (m) {
    case TaskMode::JointGcti: return "joint+gcti";
    case TaskMode::Joint: return "joint";
    case TaskMode::SegOnly: return "seg_only";
    case TaskMode::HeightOnly: return "height_only";
  }
  return "joint+gcti";
}

inline TaskMode task_mode_from_name(const std::string& s) {
  if (s == "joint+gcti") return TaskMode::JointGcti;
  if (s == "joint") return TaskMode::Joint;
  if (s == "seg_only") return TaskMode::SegOnly;
  if (s == "height_only") return TaskMode::HeightOnly;
  throw Error(ErrorKind::Config, "unknown mode '" + s +
                                     "' (expected joint+gcti, joint, seg_only, height_only)");
}

struct ModelConfig {
  BackboneConfig backbone;
  GctiConfig gcti;
  std::vector<int> ppm_bins = {1, 2, 3, 6};
  std::vector<double> anchor_scales = {32, 64, 128, 256};
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};
  ProposalConfig proposals;          // pre 1000 / post 256 / IoU 0.7
  int rpn_sample = 256;
  double rpn_pos_fraction = 0.5;
  double rpn_pos_iou = 0.7, rpn_neg_iou = 0.3;
  int roi_sample = 64;
  double roi_pos_fraction = 0.25;
  double roi_pos_iou = 0.5, roi_neg_iou = 0.4;
  int fc_dim = 1024;
  int box_pool = 7, mask_pool = 14;
  PostprocessConfig post;            // 0.05 / 0.5 / 100
  double h_max = 100.0;
  LossWeights loss_weights;
  bool height_loss_buildings_only = false;
  double height_beta = 1.0;
  double rpn_beta = 1.0 / 9.0, roi_beta = 1.0;

  void validate() const {
    backbone.validate();
    check_config(anchor_scales.size() == 4, "model: one anchor scale per pyramid level");
    check_config(!anchor_ratios.empty(), "model: anchor ratios empty");
    check_config(h_max > 0, "model: h_max must be positive");
    loss_weights.validate();
  }
};

// Ground truth for one image during training.
struct TrainingTarget {
  const InstanceSet* instances = nullptr;
  const HeightMap* height = nullptr;
};

template <typename T>
struct LightModel {
  ModelConfig cfg;
  ParamRegistry<T> reg;
  FeatureExtractor<T> fx;
  Gcti<T> gcti;
  Ppm<T> ppm;
  HeightHead<T> height_head;
  RpnHead<T> rpn;
  BoxHead<T> box_head;
  MaskHead<T> mask_head;

  mutable std::map<std::pair<int, int>, std::vector<Anchor>> anchor_cache;

  LightModel(const ModelConfig& c, uint64_t init_seed) : cfg(c) {
    cfg.validate();
    Rng rng(hash_combine(init_seed, 0x11a571c0ffeeull));
    fx = FeatureExtractor<T>(reg, cfg.backbone, rng);
    gcti = Gcti<T>(reg, cfg.backbone.fpn_channels, 4, cfg.gcti, rng);
    PpmConfig pc;
    pc.bin_sizes = cfg.ppm_bins;
    pc.out_channels = cfg.backbone.fpn_channels;
    ppm = Ppm<T>(reg, pc, rng);
    height_head = HeightHead<T>(reg, cfg.backbone.fpn_channels, rng);
    rpn = RpnHead<T>(reg, cfg.backbone.fpn_channels, static_cast<int>(cfg.anchor_ratios.size()),
                     rng);
    box_head = BoxHead<T>(reg, cfg.backbone.fpn_channels, cfg.box_pool, cfg.fc_dim, rng);
    mask_head = MaskHead<T>(reg, cfg.backbone.fpn_channels, rng);
  }

  const std::vector<Anchor>& anchors_for(int h, int w) const {
    auto key = std::make_pair(h, w);
    auto it = anchor_cache.find(key);
    if (it != anchor_cache.end()) return it->second;
    std::vector<std::array<int, 3>> dims;
    int strides[4] = {4, 8, 16, 32};
    for (int i = 0; i < 4; ++i) dims.push_back({h / strides[i], w / strides[i], strides[i]});
    return anchor_cache.emplace(key, generate_anchors(dims, cfg.anchor_scales, cfg.anchor_ratios))
        .first->second;
  }

  struct Features {
    std::vector<Var<T>> levels;  // enhanced when GCTI is active
    Var<T> height_feature;
    Var<T> height_norm;  // (N,1,H,W), defined unless seg-only
  };

  // The ablation switch lives here: joint mode is joint+gcti with the
  // interaction pass replaced by the identity.
  Features forward_features(const Var<T>& images, TaskMode mode, bool training) const {
    Features f;
    auto stages = fx.forward_backbone(images, training);
    if (mode != TaskMode::HeightOnly) f.levels = fx.forward_fpn(stages);
    if (mode != TaskMode::SegOnly) f.height_feature = fx.forward_height_feature(stages);
    if (mode == TaskMode::JointGcti) {
      auto [levels, fh] = gcti(f.levels, f.height_feature);
      f.levels = std::move(levels);
      f.height_feature = std::move(fh);
    }
    if (mode != TaskMode::SegOnly)
      f.height_norm = height_head(ppm(f.height_feature), training);
    return f;
  }

  // ---- training ----

  struct TrainOutputs {
    Var<T> total;
    LossReport report;
  };

  TrainOutputs forward_train(const Tensor<T>& images, const std::vector<TrainingTarget>& targets,
                             TaskMode mode, Rng& rng) const {
    int n = images.dim(0), img_h = images.dim(2), img_w = images.dim(3);
    check_shape(static_cast<size_t>(n) == targets.size(),
                "forward_train: batch/target count mismatch");
    auto image_var = Var<T>::constant(images);
    auto feats = forward_features(image_var, mode, true);

    Var<T> det = zero_scalar<T>(), mask = zero_scalar<T>(), height = zero_scalar<T>();

    if (mode != TaskMode::HeightOnly) {
      auto [d, m] = instance_losses(feats.levels, targets, img_w, img_h, rng);
      det = d;
      mask = m;
    }
    if (mode != TaskMode::SegOnly) height = height_loss_term(feats.height_norm, targets);

    TrainOutputs out;
    out.total = total_loss(det, mask, height, cfg.loss_weights, &out.report);
    return out;
  }

  // ---- inference ----

  struct Prediction {
    InstanceSet instances;
    HeightMap height;
  };

  Prediction forward_eval(const Tensor<T>& image, TaskMode mode) const {
    check_shape(image.dim(0) == 1, "forward_eval: single-image batches only");
    int img_h = image.dim(2), img_w = image.dim(3);
    auto feats = forward_features(Var<T>::constant(image), mode, false);

    Prediction pred;
    pred.instances.width = img_w;
    pred.instances.height = img_h;
    if (mode != TaskMode::SegOnly) {
      pred.height.h_max = static_cast<float>(cfg.h_max);
      pred.height.meters = Tensor<float>({img_h, img_w});
      const auto& hn = feats.height_norm.val();
      for (size_t i = 0; i < pred.height.meters.numel(); ++i)
        pred.height.meters.v[i] = static_cast<float>(hn.v[i] * cfg.h_max);
    }
    if (mode == TaskMode::HeightOnly) return pred;

    // Proposals from the RPN.
    auto rpn_outs = rpn(feats.levels);
    auto [obj_logits, deltas] = flatten_rpn_values(rpn_outs, 0);
    const auto& anchors = anchors_for(img_h, img_w);
    auto proposals = select_proposals(obj_logits, deltas, anchors, img_w, img_h, cfg.proposals);
    if (proposals.empty()) return pred;

    // Box head over all proposals.
    std::vector<Roi> rois;
    for (auto& p : proposals)
      rois.push_back({0, assign_level(p.box, 4), p.box.x1, p.box.y1, p.box.x2, p.box.y2});
    auto pooled = roi_align(feats.levels, {4, 8, 16, 32}, rois, cfg.box_pool);
    auto [cls_logits, box_deltas] = box_head(pooled);

    std::vector<Box> boxes;
    std::vector<double> scores;
    for (size_t i = 0; i < proposals.size(); ++i) {
      Anchor pa{proposals[i].box.cx(), proposals[i].box.cy(), proposals[i].box.w(),
                proposals[i].box.h(), 0};
      BoxDelta d{static_cast<double>(box_deltas.val().at(static_cast<int>(i), 0)),
                 static_cast<double>(box_deltas.val().at(static_cast<int>(i), 1)),
                 static_cast<double>(box_deltas.val().at(static_cast<int>(i), 2)),
                 static_cast<double>(box_deltas.val().at(static_cast<int>(i), 3))};
      boxes.push_back(clip_box(decode_box(d, pa), img_w, img_h));
      double logit = cls_logits.val().at(static_cast<int>(i), 0);
      scores.push_back(1.0 / (1.0 + std::exp(-logit)));
    }
    auto keep = select_detections(boxes, scores, cfg.post);
    if (keep.empty()) return pred;

    // Mask head only on survivors.
    std::vector<Roi> mask_rois;
    std::vector<int> valid;
    for (int idx : keep) {
      if (boxes[idx].w() <= 0 || boxes[idx].h() <= 0) continue;
      mask_rois.push_back({0, assign_level(boxes[idx], 4), boxes[idx].x1, boxes[idx].y1,
                           boxes[idx].x2, boxes[idx].y2});
      valid.push_back(idx);
    }
    if (valid.empty()) return pred;
    auto mask_pooled = roi_align(feats.levels, {4, 8, 16, 32}, mask_rois, cfg.mask_pool);
    auto mask_logits = mask_head(mask_pooled);
    int ms = mask_logits.val().dim(2);
    for (size_t k = 0; k < valid.size(); ++k) {
      int idx = valid[k];
      Instance inst;
      inst.box = boxes[idx];
      inst.score = scores[idx];
      Tensor<float> probs({ms, ms});
      for (int i = 0; i < ms * ms; ++i) {
        T logit = mask_logits.val().v[k * static_cast<size_t>(ms) * ms + i];
        probs.v[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logit))));
      }
      inst.mask = paste_mask(probs, inst.box, img_w, img_h);
      pred.instances.items.push_back(std::move(inst));
    }
    return pred;
  }

 private:
  // Reads per-anchor logits/deltas for image b out of the RPN outputs, in
  // anchor-list order.
  std::pair<std::vector<double>, std::vector<BoxDelta>> flatten_rpn_values(
      const std::vector<typename RpnHead<T>::LevelOut>& outs, int b) const {
    std::vector<double> logits;
    std::vector<BoxDelta> deltas;
    int A = rpn.n_anchors;
    for (auto& lo : outs) {
      int h = lo.objectness.val().dim(2), w = lo.objectness.val().dim(3);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int a = 0; a < A; ++a) {
            logits.push_back(static_cast<double>(lo.objectness.val().at(b, a, y, x)));
            deltas.push_back({static_cast<double>(lo.deltas.val().at(b, 4 * a + 0, y, x)),
                              static_cast<double>(lo.deltas.val().at(b, 4 * a + 1, y, x)),
                              static_cast<double>(lo.deltas.val().at(b, 4 * a + 2, y, x)),
                              static_cast<double>(lo.deltas.val().at(b, 4 * a + 3, y, x))});
          }
    }
    return {std::move(logits), std::move(deltas)};
  }

  Var<T> height_loss_term(const Var<T>& height_norm, const std::vector<TrainingTarget>& targets) const {
    int n = height_norm.val().dim(0);
    int h = height_norm.val().dim(2), w = height_norm.val().dim(3);
    Tensor<T> gt({n, 1, h, w});
    Tensor<T> mask_px({n, 1, h, w});
    for (int b = 0; b < n; ++b) {
      check_shape(targets[b].height != nullptr, "forward_train: missing height target");
      const auto& meters = targets[b].height->meters;
      check_shape(meters.dim(0) == h && meters.dim(1) == w,
                  "forward_train: height map size mismatch");
      for (int i = 0; i < h * w; ++i) {
        double norm = std::min(std::max(meters.v[i] / cfg.h_max, 0.0), 1.0);
        gt.v[(static_cast<size_t>(b) * h * w) + i] = static_cast<T>(norm);
        mask_px.v[(static_cast<size_t>(b) * h * w) + i] = meters.v[i] > 0 ? T(1) : T(0);
      }
    }
    return height_loss(height_norm, gt, static_cast<T>(cfg.height_beta),
                       cfg.height_loss_buildings_only ? &mask_px : nullptr);
  }

  std::pair<Var<T>, Var<T>> instance_losses(const std::vector<Var<T>>& levels,
                                            const std::vector<TrainingTarget>& targets,
                                            int img_w, int img_h, Rng& rng) const {
    int n_images = levels[0].val().dim(0);
    const auto& anchors = anchors_for(img_h, img_w);
    auto rpn_outs = rpn(levels);
    int A = rpn.n_anchors;

    std::vector<Box> anchor_boxes;
    anchor_boxes.reserve(anchors.size());
    for (auto& a : anchors) anchor_boxes.push_back(a.box());

    // Per-level flattened heads, reused across images.
    std::vector<Var<T>> obj_rows_lv, delta_rows_lv;

    std::vector<Var<T>> rpn_obj_sel, rpn_box_sel, roi_cls_parts, roi_box_parts, mask_parts;
    std::vector<T> rpn_obj_tgt, rpn_box_tgt, roi_cls_tgt, roi_box_tgt;
    std::vector<Tensor<T>> mask_tgts;

    std::vector<Roi> box_rois, mask_rois;
    std::vector<int> box_roi_image, mask_gt_index, mask_image;
    std::vector<char> box_roi_is_pos;
    std::vector<Box> box_roi_boxes;
    std::vector<int> box_roi_gt;

    for (int b = 0; b < n_images; ++b) {
      check_shape(targets[b].instances != nullptr, "forward_train: missing instance target");
      const auto& gt_set = *targets[b].instances;
      std::vector<Box> gt_boxes;
      for (auto& inst : gt_set.items) gt_boxes.push_back(inst.box);

      // RPN targets.
      auto match = match_by_iou(anchor_boxes, gt_boxes, cfg.rpn_pos_iou, cfg.rpn_neg_iou, true);
      std::vector<char> is_pos;
      auto sampled = sample_balanced(match, cfg.rpn_sample, cfg.rpn_pos_fraction, rng, is_pos);

      // Flatten heads for this image.
      std::vector<Var<T>> obj_parts, delta_parts;
      for (auto& lo : rpn_outs) {
        obj_parts.push_back(flatten_head(slice_image(lo.objectness, b), A, 1));
        delta_parts.push_back(flatten_head(slice_image(lo.deltas, b), A, 4));
      }
      auto obj_rows = concat_rows(obj_parts);      // (n_anchors, 1)
      auto delta_rows = concat_rows(delta_parts);  // (n_anchors, 4)

      if (!sampled.empty()) {
        rpn_obj_sel.push_back(index_select_rows(obj_rows, sampled));
        for (size_t k = 0; k < sampled.size(); ++k) rpn_obj_tgt.push_back(is_pos[k] ? T(1) : T(0));
        std::vector<int> pos_idx;
        for (size_t k = 0; k < sampled.size(); ++k)
          if (is_pos[k]) pos_idx.push_back(sampled[k]);
        if (!pos_idx.empty()) {
          rpn_box_sel.push_back(index_select_rows(delta_rows, pos_idx));
          for (int ai : pos_idx) {
            auto tgt = encode_box(gt_boxes[match.gt[ai]], anchors[ai]);
            for (double v : tgt) rpn_box_tgt.push_back(static_cast<T>(v));
          }
        }
      }

      // Proposals for the RoI stage; ground-truth boxes are appended so the
      // heads see positives before the RPN warms up.
      auto [logits, deltas_v] = flatten_rpn_values(rpn_outs, b);
      auto proposals = select_proposals(logits, deltas_v, anchors, img_w, img_h, cfg.proposals);
      std::vector<Box> prop_boxes;
      for (auto& p : proposals) prop_boxes.push_back(p.box);
      for (auto& g : gt_boxes) prop_boxes.push_back(g);

      auto roi_match = match_by_iou(prop_boxes, gt_boxes, cfg.roi_pos_iou, cfg.roi_neg_iou, false);
      std::vector<char> roi_is_pos;
      auto roi_sampled = sample_balanced(roi_match, cfg.roi_sample, cfg.roi_pos_fraction, rng,
                                         roi_is_pos);
      for (size_t k = 0; k < roi_sampled.size(); ++k) {
        const Box& pb = prop_boxes[roi_sampled[k]];
        if (pb.w() < 1e-3 || pb.h() < 1e-3) continue;
        box_rois.push_back({b, assign_level(pb, 4), pb.x1, pb.y1, pb.x2, pb.y2});
        box_roi_image.push_back(b);
        box_roi_is_pos.push_back(roi_is_pos[k]);
        box_roi_boxes.push_back(pb);
        box_roi_gt.push_back(roi_match.gt[roi_sampled[k]]);
        if (roi_is_pos[k]) {
          mask_rois.push_back(box_rois.back());
          mask_gt_index.push_back(roi_match.gt[roi_sampled[k]]);
          mask_image.push_back(b);
        }
      }
    }

    // RoI heads over the whole batch at once.
    Var<T> roi_cls_logits, roi_box_pred, mask_logits;
    Tensor<T> roi_cls_targets, roi_box_targets, mask_targets;
    if (!box_rois.empty()) {
      auto pooled = roi_align(levels, {4, 8, 16, 32}, box_rois, cfg.box_pool);
      auto [cls, reg_out] = box_head(pooled);
      roi_cls_logits = cls;
      roi_cls_targets = Tensor<T>({static_cast<int>(box_rois.size()), 1});
      for (size_t k = 0; k < box_rois.size(); ++k)
        roi_cls_targets.v[k] = box_roi_is_pos[k] ? T(1) : T(0);

      std::vector<int> pos_rows;
      for (size_t k = 0; k < box_rois.size(); ++k)
        if (box_roi_is_pos[k]) pos_rows.push_back(static_cast<int>(k));
      if (!pos_rows.empty()) {
        roi_box_pred = index_select_rows(reg_out, pos_rows);
        roi_box_targets = Tensor<T>({static_cast<int>(pos_rows.size()), 4});
        for (size_t k = 0; k < pos_rows.size(); ++k) {
          int row = pos_rows[k];
          const Box& pb = box_roi_boxes[row];
          Anchor pa{pb.cx(), pb.cy(), pb.w(), pb.h(), 0};
          const auto& gt_box =
              targets[box_roi_image[row]].instances->items[box_roi_gt[row]].box;
          auto tgt = encode_box(gt_box, pa);
          for (int c = 0; c < 4; ++c) roi_box_targets.v[k * 4 + c] = static_cast<T>(tgt[c]);
        }
      }
    }
    if (!mask_rois.empty()) {
      auto pooled = roi_align(levels, {4, 8, 16, 32}, mask_rois, cfg.mask_pool);
      mask_logits = mask_head(pooled);
      int ms = mask_logits.val().dim(2);
      mask_targets = Tensor<T>({static_cast<int>(mask_rois.size()), 1, ms, ms});
      for (size_t k = 0; k < mask_rois.size(); ++k) {
        const auto& gt_mask = targets[mask_image[k]].instances->items[mask_gt_index[k]].mask;
        Box pb{mask_rois[k].x1, mask_rois[k].y1, mask_rois[k].x2, mask_rois[k].y2};
        auto tgt = mask_roi_target<T>(gt_mask, pb, ms);
        std::copy(tgt.v.begin(), tgt.v.end(),
                  mask_targets.v.begin() + k * static_cast<size_t>(ms) * ms);
      }
    }

    DetectionLossInputs<T> in;
    if (!rpn_obj_sel.empty()) {
      in.rpn_obj_logits = concat_rows(rpn_obj_sel);
      in.rpn_obj_targets = Tensor<T>({static_cast<int>(rpn_obj_tgt.size()), 1});
      std::copy(rpn_obj_tgt.begin(), rpn_obj_tgt.end(), in.rpn_obj_targets.v.begin());
    } else {
      in.rpn_obj_logits = Var<T>::constant(Tensor<T>({0, 1}));
      in.rpn_obj_targets = Tensor<T>({0, 1});
    }
    if (!rpn_box_sel.empty()) {
      in.rpn_box_pred = concat_rows(rpn_box_sel);
      in.rpn_box_targets = Tensor<T>({in.rpn_box_pred.val().dim(0), 4});
      std::copy(rpn_box_tgt.begin(), rpn_box_tgt.end(), in.rpn_box_targets.v.begin());
    }
    in.roi_cls_logits = roi_cls_logits;
    in.roi_cls_targets = roi_cls_targets;
    in.roi_box_pred = roi_box_pred;
    in.roi_box_targets = roi_box_targets;

    auto det = detection_loss(in, static_cast<T>(cfg.rpn_beta), static_cast<T>(cfg.roi_beta));
    auto msk = mask_loss(mask_logits, mask_targets);
    return {det, msk};
  }

  // (N,C,H,W) -> (1,C,H,W) view of image b, differentiable.
  static Var<T> slice_image(const Var<T>& x, int b) {
    int c = x.val().dim(1), h = x.val().dim(2), w = x.val().dim(3);
    size_t plane = static_cast<size_t>(c) * h * w;
    Tensor<T> out({1, c, h, w});
    std::copy(x.val().v.begin() + b * plane, x.val().v.begin() + (b + 1) * plane,
              out.v.begin());
    return make_op<T>(std::move(out), {x}, [b, plane](Node<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (size_t i = 0; i < plane; ++i) p.grad.v[b * plane + i] += self.grad.v[i];
    });
  }
};

}  // namespace light
