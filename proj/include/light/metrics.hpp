#pragma once

#include <json.hpp>
#include <optional>

#include "light/types.hpp"

namespace light {

// |A n B| / |A u B|; 0 (with a warning) when both masks are empty.
double mask_iou(const Tensor<uint8_t>& a, const Tensor<uint8_t>& b);

// Greedy score-ordered matching at one mask-IoU threshold followed by
// 101-point interpolated AP. nullopt when the split holds no ground truth.
std::optional<double> average_precision(const std::vector<InstanceSet>& predictions,
                                        const std::vector<InstanceSet>& ground_truth,
                                        double iou_thresh, bool use_boxes = false);

struct ApTable {
  std::optional<double> map;   // percent, mean over 0.50:0.05:0.95
  std::optional<double> ap50;  // percent
  std::vector<std::pair<double, double>> per_threshold;  // (threshold, AP percent)
};

ApTable map_metric(const std::vector<InstanceSet>& predictions,
                   const std::vector<InstanceSet>& ground_truth, bool use_boxes = false);

// Fraction (percent) of pixels with gt > 1 m whose symmetric height ratio is
// below 1.25^k. Predictions are clamped at 0.1 m. nullopt when no pixel
// qualifies.
std::optional<double> delta_accuracy(const HeightMap& pred, const HeightMap& gt, int k);

struct MetricsReport {
  ApTable mask_ap;           // headline (Table-style mAP / AP50)
  ApTable box_ap;            // secondary
  std::optional<double> delta1, delta2, delta3;
  int n_images = 0;
  int n_gt = 0;

  nlohmann::json to_json() const;
};

// Full evaluation over a split. Height maps may be empty (seg-only mode);
// predictions may be empty sets (delta columns still computed).
MetricsReport compute_metrics(const std::vector<InstanceSet>& predictions,
                              const std::vector<InstanceSet>& ground_truth,
                              const std::vector<HeightMap>& pred_heights,
                              const std::vector<HeightMap>& gt_heights);

}  // namespace light
