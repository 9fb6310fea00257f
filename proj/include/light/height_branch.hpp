#pragma once

#include "light/modules.hpp"
#include "light/ops_resize.hpp"

namespace light {

struct PpmConfig {
  std::vector<int> bin_sizes = {1, 2, 3, 6};
  int out_channels = 256;

  void validate(int input_size) const {
    check_config(!bin_sizes.empty(), "ppm: bin_sizes empty");
    for (size_t i = 0; i + 1 < bin_sizes.size(); ++i)
      check_config(bin_sizes[i] < bin_sizes[i + 1], "ppm: bin sizes must strictly increase");
    check_config(bin_sizes.front() >= 1, "ppm: bin sizes must be >= 1");
    if (input_size > 0)
      check_config(bin_sizes.back() <= input_size,
                   "ppm: bin size " + std::to_string(bin_sizes.back()) +
                       " exceeds input spatial size " + std::to_string(input_size));
    check_config(out_channels % 4 == 0, "ppm: out_channels must be divisible by 4");
  }
};

// Pyramid pooling: per bin size, adaptive-average-pool -> 1x1 conv to d/4 ->
// bilinear upsample back; concatenate with the input and fuse with a 3x3 conv.
template <typename T>
struct Ppm {
  PpmConfig cfg;
  std::vector<Conv2d<T>> branch_convs;
  Conv2d<T> fuse;

  Ppm() = default;
  Ppm(ParamRegistry<T>& reg, const PpmConfig& c, Rng& rng) : cfg(c) {
    cfg.validate(0);
    int d = cfg.out_channels;
    for (size_t i = 0; i < cfg.bin_sizes.size(); ++i)
      branch_convs.emplace_back(reg, "ppm.branch" + std::to_string(i), d, d / 4, 1, 1, 0,
                                rng);
    int cat = d + static_cast<int>(cfg.bin_sizes.size()) * (d / 4);
    // Replicate padding keeps constant maps constant through the fusion conv.
    fuse = Conv2d<T>(reg, "ppm.fuse", cat, d, 3, 1, 1, rng, true, -1.0, PadMode::Replicate);
  }

  Var<T> operator()(const Var<T>& x) const {
    int h = x.val().dim(2), w = x.val().dim(3);
    cfg.validate(std::min(h, w));
    check_shape(x.val().dim(1) == cfg.out_channels, "ppm: channel mismatch");
    std::vector<Var<T>> parts{x};
    for (size_t i = 0; i < cfg.bin_sizes.size(); ++i) {
      auto pooled = adaptive_avg_pool(x, cfg.bin_sizes[i]);
      auto squeezed = relu(branch_convs[i](pooled));
      parts.push_back(bilinear_resize(squeezed, h, w));
    }
    return relu(fuse(concat_channels(parts)));
  }
};

// Conv -> BN -> Conv -> Sigmoid head over the pooled feature, then a x4
// bilinear upsample to image resolution. Output values are normalized
// heights in (0,1).
template <typename T>
struct HeightHead {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn;
  int upsample_factor = 4;

  HeightHead() = default;
  HeightHead(ParamRegistry<T>& reg, int channels, Rng& rng, int upsample = 4)
      : upsample_factor(upsample) {
    check_config(channels % 2 == 0, "height head: channels must be even");
    conv1 = Conv2d<T>(reg, "height_head.conv1", channels, channels / 2, 3, 1, 1, rng);
    bn = BatchNorm2d<T>(reg, "height_head.bn", channels / 2);
    conv2 = Conv2d<T>(reg, "height_head.conv2", channels / 2, 1, 3, 1, 1, rng);
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    auto h = sigmoid(conv2(bn(conv1(x), training)));
    return bilinear_resize(h, x.val().dim(2) * upsample_factor,
                           x.val().dim(3) * upsample_factor);
  }
};

// Normalized (0,1) heights to meters.
template <typename T>
Tensor<T> denormalize_height(const Tensor<T>& normalized, T h_max) {
  check_config(h_max > T(0), "denormalize: H_max must be positive");
  Tensor<T> out = normalized;
  for (auto& v : out.v) v *= h_max;
  return out;
}

template <typename T>
Tensor<T> normalize_height(const Tensor<T>& meters, T h_max) {
  check_config(h_max > T(0), "normalize: H_max must be positive");
  Tensor<T> out = meters;
  for (auto& v : out.v) {
    v /= h_max;
    v = std::min(std::max(v, T(0)), T(1));
  }
  return out;
}

}  // namespace light
