#pragma once

#include "light/boxes.hpp"
#include "light/tensor.hpp"

namespace light {

// RGB image in [0,1], stored (1,3,H,W) so tiles drop straight into batches.
struct ImageTile {
  Tensor<float> chw;

  int height() const { return chw.dim(2); }
  int width() const { return chw.dim(3); }
};

// One building instance. Ground truth carries height_m; predictions carry a
// confidence score. Masks are full-resolution 0/1 fields.
struct Instance {
  Box box;
  double score = 1.0;
  float height_m = 0.0f;
  Tensor<uint8_t> mask;  // (H,W)
};

struct InstanceSet {
  int width = 0, height = 0;
  std::vector<Instance> items;

  size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

// Per-pixel nonnegative heights in meters with the normalization scale used
// during training (normalized = meters / h_max, clipped to [0,1]).
struct HeightMap {
  Tensor<float> meters;  // (H,W)
  float h_max = 100.0f;
};

}  // namespace light
