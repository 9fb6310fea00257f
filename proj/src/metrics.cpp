#include "light/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace light {

double mask_iou(const Tensor<uint8_t>& a, const Tensor<uint8_t>& b) {
  check_shape(a.shape == b.shape, "mask_iou: shape mismatch " + a.shape_str() + " vs " +
                                      b.shape_str());
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.numel(); ++i) {
    bool av = a.v[i] != 0, bv = b.v[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  if (uni == 0) {
    std::fprintf(stderr, "warning: mask_iou of two empty masks, returning 0\n");
    return 0.0;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// One prediction in the global score ordering.
struct Pred {
  int image = 0;
  int index = 0;  // within its image's InstanceSet
  double score = 0;
};

// Precomputed IoU matrices per image: iou[img][pred][gt]. Shared across
// thresholds since IoU does not depend on the threshold.
std::vector<std::vector<std::vector<double>>> build_iou(
    const std::vector<InstanceSet>& preds, const std::vector<InstanceSet>& gts,
    bool use_boxes) {
  std::vector<std::vector<std::vector<double>>> iou(preds.size());
  for (size_t im = 0; im < preds.size(); ++im) {
    iou[im].resize(preds[im].items.size());
    for (size_t p = 0; p < preds[im].items.size(); ++p) {
      iou[im][p].resize(gts[im].items.size());
      for (size_t g = 0; g < gts[im].items.size(); ++g) {
        const auto& pi = preds[im].items[p];
        const auto& gi = gts[im].items[g];
        iou[im][p][g] = use_boxes ? box_iou(pi.box, gi.box) : mask_iou(pi.mask, gi.mask);
      }
    }
  }
  return iou;
}

std::vector<Pred> global_order(const std::vector<InstanceSet>& preds) {
  std::vector<Pred> order;
  for (size_t im = 0; im < preds.size(); ++im)
    for (size_t p = 0; p < preds[im].items.size(); ++p)
      order.push_back({static_cast<int>(im), static_cast<int>(p), preds[im].items[p].score});
  std::stable_sort(order.begin(), order.end(),
                   [](const Pred& a, const Pred& b) { return a.score > b.score; });
  return order;
}

std::optional<double> ap_at(const std::vector<Pred>& order,
                            const std::vector<std::vector<std::vector<double>>>& iou,
                            const std::vector<InstanceSet>& gts, double thresh) {
  size_t n_gt = 0;
  for (auto& g : gts) n_gt += g.items.size();
  if (n_gt == 0) return std::nullopt;  // undefined, never reported as perfect

  std::vector<std::vector<char>> taken(gts.size());
  for (size_t im = 0; im < gts.size(); ++im) taken[im].assign(gts[im].items.size(), 0);

  size_t tp = 0, fp = 0;
  std::vector<double> precision, recall;
  for (const auto& pr : order) {
    const auto& row = iou[pr.image][pr.index];
    // Highest-IoU unmatched GT above the threshold; ties keep the first.
    int best_g = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < row.size(); ++g) {
      if (taken[pr.image][g] || row[g] < thresh) continue;
      if (row[g] > best_iou) {
        best_iou = row[g];
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      taken[pr.image][best_g] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  // 101-point interpolation: mean over r in {0, 0.01, .., 1} of the best
  // precision achieved at recall >= r.
  double ap = 0.0;
  for (int ri = 0; ri <= 100; ++ri) {
    double r = ri / 100.0;
    double best = 0.0;
    for (size_t k = 0; k < precision.size(); ++k)
      if (recall[k] >= r - 1e-12) best = std::max(best, precision[k]);
    ap += best;
  }
  return ap / 101.0;
}

}  // namespace

std::optional<double> average_precision(const std::vector<InstanceSet>& predictions,
                                        const std::vector<InstanceSet>& ground_truth,
                                        double iou_thresh, bool use_boxes) {
  check_shape(predictions.size() == ground_truth.size(),
              "average_precision: prediction/GT image counts differ");
  auto iou = build_iou(predictions, ground_truth, use_boxes);
  auto order = global_order(predictions);
  return ap_at(order, iou, ground_truth, iou_thresh);
}

ApTable map_metric(const std::vector<InstanceSet>& predictions,
                   const std::vector<InstanceSet>& ground_truth, bool use_boxes) {
  check_shape(predictions.size() == ground_truth.size(),
              "map_metric: prediction/GT image counts differ");
  auto iou = build_iou(predictions, ground_truth, use_boxes);
  auto order = global_order(predictions);
  ApTable table;
  double sum = 0;
  int count = 0;
  for (int t = 0; t < 10; ++t) {
    double thresh = 0.50 + 0.05 * t;
    auto ap = ap_at(order, iou, ground_truth, thresh);
    if (ap) {
      double pct = *ap * 100.0;
      table.per_threshold.emplace_back(thresh, pct);
      sum += pct;
      ++count;
      if (t == 0) table.ap50 = pct;
    }
  }
  if (count > 0) table.map = sum / count;
  return table;
}

std::optional<double> delta_accuracy(const HeightMap& pred, const HeightMap& gt, int k) {
  check_config(k >= 1 && k <= 3, "delta_accuracy: k must be 1, 2, or 3");
  require_same_shape(pred.meters, gt.meters, "delta_accuracy");
  double thresh = std::pow(1.25, k);
  size_t evaluated = 0, good = 0;
  for (size_t i = 0; i < gt.meters.numel(); ++i) {
    double g = gt.meters.v[i];
    if (g <= 1.0) continue;  // building pixels only; ratio ill-defined near 0
    double p = std::max(static_cast<double>(pred.meters.v[i]), 0.1);
    double ratio = std::max(p / g, g / p);
    ++evaluated;
    good += ratio < thresh;
  }
  if (evaluated == 0) return std::nullopt;
  return 100.0 * static_cast<double>(good) / static_cast<double>(evaluated);
}

namespace {

// Pixel-pooled delta over a split.
std::optional<double> pooled_delta(const std::vector<HeightMap>& pred,
                                   const std::vector<HeightMap>& gt, int k) {
  double thresh = std::pow(1.25, k);
  size_t evaluated = 0, good = 0;
  for (size_t im = 0; im < gt.size(); ++im) {
    require_same_shape(pred[im].meters, gt[im].meters, "delta");
    for (size_t i = 0; i < gt[im].meters.numel(); ++i) {
      double g = gt[im].meters.v[i];
      if (g <= 1.0) continue;
      double p = std::max(static_cast<double>(pred[im].meters.v[i]), 0.1);
      ++evaluated;
      good += std::max(p / g, g / p) < thresh;
    }
  }
  if (evaluated == 0) return std::nullopt;
  return 100.0 * static_cast<double>(good) / static_cast<double>(evaluated);
}

nlohmann::json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<InstanceSet>& predictions,
                              const std::vector<InstanceSet>& ground_truth,
                              const std::vector<HeightMap>& pred_heights,
                              const std::vector<HeightMap>& gt_heights) {
  MetricsReport rep;
  rep.n_images = static_cast<int>(ground_truth.size());
  for (auto& g : ground_truth) rep.n_gt += static_cast<int>(g.items.size());
  if (!predictions.empty()) {
    rep.mask_ap = map_metric(predictions, ground_truth, false);
    rep.box_ap = map_metric(predictions, ground_truth, true);
  }
  if (!pred_heights.empty()) {
    check_shape(pred_heights.size() == gt_heights.size(),
                "compute_metrics: height map counts differ");
    rep.delta1 = pooled_delta(pred_heights, gt_heights, 1);
    rep.delta2 = pooled_delta(pred_heights, gt_heights, 2);
    rep.delta3 = pooled_delta(pred_heights, gt_heights, 3);
  }
  return rep;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_t = nlohmann::json::array();
  for (auto& [t, ap] : mask_ap.per_threshold) per_t.push_back({{"iou", t}, {"ap", ap}});
  return nlohmann::json{{"mAP", opt_json(mask_ap.map)},
                        {"AP50", opt_json(mask_ap.ap50)},
                        {"per_threshold", per_t},
                        {"box_mAP", opt_json(box_ap.map)},
                        {"box_AP50", opt_json(box_ap.ap50)},
                        {"delta1", opt_json(delta1)},
                        {"delta2", opt_json(delta2)},
                        {"delta3", opt_json(delta3)},
                        {"n_images", n_images},
                        {"n_gt", n_gt}};
}

}  // namespace light
