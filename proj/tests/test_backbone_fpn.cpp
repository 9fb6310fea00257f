#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "light/feature_extractor.hpp"
#include "test_util.hpp"

using namespace light;
using light::testing::check_gradients;
using light::testing::project;

TEST_CASE("backbone stage shapes at 512 with width 64") {
  ParamRegistry<float> reg;
  Rng rng(1);
  BackboneConfig cfg;  // defaults: depth 2222, width 64
  Backbone<float> net(reg, cfg, rng);
  auto img = Var<float>::constant(Tensor<float>({1, 3, 512, 512}));
  auto stages = net(img, false);
  REQUIRE(stages.size() == 4);
  CHECK(stages[0].val().shape == std::vector<int>({1, 64, 128, 128}));
  CHECK(stages[1].val().shape == std::vector<int>({1, 128, 64, 64}));
  CHECK(stages[2].val().shape == std::vector<int>({1, 256, 32, 32}));
  CHECK(stages[3].val().shape == std::vector<int>({1, 512, 16, 16}));
}

TEST_CASE("backbone stage shapes at 64") {
  ParamRegistry<float> reg;
  Rng rng(2);
  BackboneConfig cfg;
  cfg.width = 8;
  Backbone<float> net(reg, cfg, rng);
  auto img = Var<float>::constant(Tensor<float>({1, 3, 64, 64}));
  auto stages = net(img, false);
  CHECK(stages[0].val().dim(2) == 16);
  CHECK(stages[1].val().dim(2) == 8);
  CHECK(stages[2].val().dim(2) == 4);
  CHECK(stages[3].val().dim(2) == 2);
}

TEST_CASE("backbone rejects sizes not divisible by 32") {
  ParamRegistry<float> reg;
  Rng rng(3);
  BackboneConfig cfg;
  cfg.width = 4;
  Backbone<float> net(reg, cfg, rng);
  auto img = Var<float>::constant(Tensor<float>({1, 3, 48, 64}));
  CHECK_THROWS_WITH_AS(net(img, false), doctest::Contains("divisible by 32"), Error);
}

TEST_CASE("shape law holds for random sizes divisible by 32") {
  ParamRegistry<float> reg;
  Rng rng(4);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.depth = {1, 1, 1, 1};
  cfg.fpn_channels = 8;
  Backbone<float> net(reg, cfg, rng);
  Fpn<float> fpn(reg, cfg, rng);
  for (int trial = 0; trial < 5; ++trial) {
    int h = 32 * static_cast<int>(rng.uniform_int(2, 6));
    int w = 32 * static_cast<int>(rng.uniform_int(2, 6));
    auto img = Var<float>::constant(Tensor<float>::randn({1, 3, h, w}, rng));
    auto stages = net(img, false);
    auto levels = fpn(stages);
    int strides[4] = {4, 8, 16, 32};
    for (int i = 0; i < 4; ++i) {
      CHECK(levels[i].val().dim(1) == 8);
      CHECK(levels[i].val().dim(2) == h / strides[i]);
      CHECK(levels[i].val().dim(3) == w / strides[i]);
    }
  }
}

TEST_CASE("backbone and fpn are deterministic under fixed parameters") {
  ParamRegistry<float> reg;
  Rng rng(5);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.fpn_channels = 8;
  Backbone<float> net(reg, cfg, rng);
  Fpn<float> fpn(reg, cfg, rng);
  Rng data_rng(99);
  auto img = Var<float>::constant(Tensor<float>::randn({1, 3, 64, 64}, data_rng));
  auto a = fpn(net(img, false));
  auto b = fpn(net(img, false));
  for (int i = 0; i < 4; ++i) CHECK(a[i].val().v == b[i].val().v);
}

TEST_CASE("fpn maps all-zero stages to an all-zero pyramid") {
  ParamRegistry<float> reg;
  Rng rng(6);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.fpn_channels = 8;
  Fpn<float> fpn(reg, cfg, rng);
  std::vector<Var<float>> stages;
  int hw = 32;
  for (int i = 0; i < 4; ++i) {
    stages.push_back(Var<float>::constant(Tensor<float>({1, 4 << i, hw, hw})));
    hw /= 2;
  }
  auto levels = fpn(stages);
  for (auto& l : levels)
    for (auto v : l.val().v) CHECK(v == 0.0f);
}

TEST_CASE("fpn rejects channel mismatch") {
  ParamRegistry<float> reg;
  Rng rng(7);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.fpn_channels = 8;
  Fpn<float> fpn(reg, cfg, rng);
  std::vector<Var<float>> stages;
  int hw = 32;
  for (int i = 0; i < 4; ++i) {
    stages.push_back(Var<float>::constant(Tensor<float>({1, 5 << i, hw, hw})));  // wrong widths
    hw /= 2;
  }
  CHECK_THROWS_AS(fpn(stages), Error);
}

TEST_CASE("fpn gradient w.r.t. lateral weights matches finite differences") {
  ParamRegistry<double> reg;
  Rng rng(8);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.depth = {1, 1, 1, 1};
  cfg.fpn_channels = 8;
  Fpn<double> fpn(reg, cfg, rng);
  std::vector<Var<double>> stages;
  int hw = 16;
  for (int i = 0; i < 4; ++i) {
    stages.push_back(Var<double>::constant(Tensor<double>::randn({1, 4 << i, hw, hw}, rng)));
    hw /= 2;
  }
  std::vector<Tensor<double>> projs;
  auto fwd = [&] {
    auto levels = fpn(stages);
    Var<double> total;
    for (size_t i = 0; i < levels.size(); ++i) {
      if (projs.size() <= i) projs.push_back(Tensor<double>::randn(levels[i].val().shape, rng));
      auto s = project(levels[i], projs[i]);
      total = i == 0 ? s : add(total, s);
    }
    return total;
  };
  std::vector<Var<double>> leaves;
  for (int i = 0; i < 4; ++i) {
    leaves.push_back(fpn.laterals[i].w);
    leaves.push_back(fpn.laterals[i].b);
  }
  auto res = check_gradients(fwd, leaves, rng);
  CHECK(res.ok);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("height feature comes from the stride-4 stage via one 3x3 conv") {
  ParamRegistry<float> reg;
  Rng rng(9);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.depth = {1, 1, 1, 1};
  cfg.fpn_channels = 8;
  FeatureExtractor<float> fx(reg, cfg, rng);
  auto img = Var<float>::constant(Tensor<float>::randn({1, 3, 64, 64}, rng));
  auto pyr = fx(img, false);
  CHECK(pyr.height_feature.val().shape == std::vector<int>({1, 8, 16, 16}));

  // Zero-initialized convolution maps any stage to zero.
  fx.height_conv.w.val_mut().zero();
  fx.height_conv.b.val_mut().zero();
  auto stages = fx.forward_backbone(img, false);
  auto fh = fx.forward_height_feature(stages);
  for (auto v : fh.val().v) CHECK(v == 0.0f);
}

TEST_CASE("height feature gradient check") {
  ParamRegistry<double> reg;
  Rng rng(10);
  BackboneConfig cfg;
  cfg.width = 4;
  cfg.depth = {1, 1, 1, 1};
  cfg.fpn_channels = 8;
  FeatureExtractor<double> fx(reg, cfg, rng);
  auto stage0 = Var<double>::constant(Tensor<double>::randn({1, 4, 8, 8}, rng));
  Tensor<double> proj = Tensor<double>::randn({1, 8, 8, 8}, rng);
  auto fwd = [&] { return project(fx.height_conv(stage0), proj); };
  CHECK(check_gradients(fwd, {fx.height_conv.w, fx.height_conv.b}, rng).ok);
}
