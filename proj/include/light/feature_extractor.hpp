#pragma once

#include "light/backbone.hpp"

namespace light {

// Multi-scale semantic features F_1..F_l at strides 4..32 plus the
// height-branch feature F_h at stride 4, all with d channels.
template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;
  Var<T> height_feature;
  std::vector<int> strides = {4, 8, 16, 32};
};

template <typename T>
struct FeatureExtractor {
  BackboneConfig cfg;
  Backbone<T> backbone;
  Fpn<T> fpn;
  Conv2d<T> height_conv;  // 3x3 over the stride-4 stage

  FeatureExtractor() = default;
  FeatureExtractor(ParamRegistry<T>& reg, const BackboneConfig& c, Rng& rng)
      : cfg(c),
        backbone(reg, c, rng),
        fpn(reg, c, rng),
        height_conv(reg, "height_feat", c.width, c.fpn_channels, 3, 1, 1, rng) {}

  std::vector<Var<T>> forward_backbone(const Var<T>& image, bool training) const {
    return backbone(image, training);
  }
  std::vector<Var<T>> forward_fpn(const std::vector<Var<T>>& stages) const {
    return fpn(stages);
  }
  Var<T> forward_height_feature(const std::vector<Var<T>>& stages) const {
    return height_conv(stages[0]);
  }

  FeaturePyramid<T> operator()(const Var<T>& image, bool training,
                               bool with_height = true) const {
    auto stages = forward_backbone(image, training);
    FeaturePyramid<T> p;
    p.levels = forward_fpn(stages);
    if (with_height) p.height_feature = forward_height_feature(stages);
    return p;
  }
};

}  // namespace light
