#pragma once

#include "light/modules.hpp"
#include "light/ops_resize.hpp"

namespace light {

struct BackboneConfig {
  std::vector<int> depth = {2, 2, 2, 2};  // residual blocks per stage
  int width = 64;                         // stage-1 channels; stage i has width<<i
  int fpn_channels = 256;

  void validate() const {
    check_config(depth.size() == 4, "backbone: depth must list 4 stages");
    for (int d : depth) check_config(d >= 1, "backbone: stage depth must be positive");
    check_config(width >= 1, "backbone: width must be positive");
    check_config(fpn_channels >= 4 && fpn_channels % 4 == 0,
                 "backbone: fpn_channels must be a positive multiple of 4");
  }
};

template <typename T>
struct BasicBlock {
  Conv2d<T> c1, c2;
  BatchNorm2d<T> n1, n2;
  Conv2d<T> proj;  // 1x1 shortcut when shape changes
  BatchNorm2d<T> nproj;
  bool has_proj = false;

  BasicBlock() = default;
  BasicBlock(ParamRegistry<T>& reg, const std::string& name, int cin, int cout,
             int stride, Rng& rng) {
    c1 = Conv2d<T>(reg, name + ".c1", cin, cout, 3, stride, 1, rng, false);
    n1 = BatchNorm2d<T>(reg, name + ".n1", cout);
    c2 = Conv2d<T>(reg, name + ".c2", cout, cout, 3, 1, 1, rng, false);
    n2 = BatchNorm2d<T>(reg, name + ".n2", cout);
    has_proj = stride != 1 || cin != cout;
    if (has_proj) {
      proj = Conv2d<T>(reg, name + ".proj", cin, cout, 1, stride, 0, rng, false);
      nproj = BatchNorm2d<T>(reg, name + ".nproj", cout);
    }
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    auto y = relu(n1(c1(x), training));
    y = n2(c2(y), training);
    auto skip = has_proj ? nproj(proj(x), training) : x;
    return relu(add(y, skip));
  }
};

// Small residual net. Stage outputs sit at strides 4/8/16/32 with widths
// {w, 2w, 4w, 8w}.
template <typename T>
struct Backbone {
  BackboneConfig cfg;
  Conv2d<T> stem1, stem2;
  BatchNorm2d<T> sn1, sn2;
  std::vector<std::vector<BasicBlock<T>>> stages;

  Backbone() = default;
  Backbone(ParamRegistry<T>& reg, const BackboneConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    int w = cfg.width;
    stem1 = Conv2d<T>(reg, "backbone.stem1", 3, w, 3, 2, 1, rng, false);
    sn1 = BatchNorm2d<T>(reg, "backbone.stem1.n", w);
    stem2 = Conv2d<T>(reg, "backbone.stem2", w, w, 3, 2, 1, rng, false);
    sn2 = BatchNorm2d<T>(reg, "backbone.stem2.n", w);
    int cin = w;
    for (int s = 0; s < 4; ++s) {
      int cout = w << s;
      std::vector<BasicBlock<T>> blocks;
      for (int b = 0; b < cfg.depth[s]; ++b) {
        int stride = (b == 0 && s > 0) ? 2 : 1;
        blocks.emplace_back(reg, "backbone.s" + std::to_string(s + 1) + ".b" + std::to_string(b),
                            cin, cout, stride, rng);
        cin = cout;
      }
      stages.push_back(std::move(blocks));
    }
  }

  // image: (N,3,H,W) with H and W divisible by 32.
  std::vector<Var<T>> operator()(const Var<T>& image, bool training) const {
    const auto& s = image.val().shape;
    check_shape(s.size() == 4 && s[1] == 3, "backbone: expected (N,3,H,W) input");
    check_shape(s[2] % 32 == 0 && s[3] % 32 == 0,
                "backbone: input size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                    " must be divisible by 32");
    auto x = relu(sn1(stem1(image), training));
    x = relu(sn2(stem2(x), training));
    std::vector<Var<T>> outs;
    for (auto& stage : stages) {
      for (auto& blk : stage) x = blk(x, training);
      outs.push_back(x);
    }
    return outs;
  }
};

// Top-down pyramid with 1x1 lateral projections and nearest-neighbor merge.
// Laterals and output convs keep zero-initialized biases so a zero input maps
// to a zero pyramid.
template <typename T>
struct Fpn {
  int channels = 0;
  std::vector<Conv2d<T>> laterals, outputs;

  Fpn() = default;
  Fpn(ParamRegistry<T>& reg, const BackboneConfig& cfg, Rng& rng) : channels(cfg.fpn_channels) {
    for (int i = 0; i < 4; ++i) {
      int cin = cfg.width << i;
      laterals.emplace_back(reg, "fpn.lat" + std::to_string(i), cin, channels, 1, 1, 0, rng,
                            true, std::sqrt(1.0 / cin));
      outputs.emplace_back(reg, "fpn.out" + std::to_string(i), channels, channels, 3, 1, 1,
                           rng, true, std::sqrt(1.0 / (9.0 * channels)));
    }
  }

  std::vector<Var<T>> operator()(const std::vector<Var<T>>& stages) const {
    check_shape(stages.size() == 4, "fpn: expected 4 backbone stages");
    for (size_t i = 0; i + 1 < stages.size(); ++i)
      check_shape(stages[i].val().dim(2) == 2 * stages[i + 1].val().dim(2) &&
                      stages[i].val().dim(3) == 2 * stages[i + 1].val().dim(3),
                  "fpn: stages must halve spatially, got " + stages[i].val().shape_str() +
                      " then " + stages[i + 1].val().shape_str());
    std::vector<Var<T>> merged(4);
    merged[3] = laterals[3](stages[3]);
    for (int i = 2; i >= 0; --i) {
      auto up = nearest_resize(merged[i + 1], stages[i].val().dim(2), stages[i].val().dim(3));
      merged[i] = add(laterals[i](stages[i]), up);
    }
    std::vector<Var<T>> levels(4);
    for (int i = 0; i < 4; ++i) levels[i] = outputs[i](merged[i]);
    return levels;
  }
};

}  // namespace light
