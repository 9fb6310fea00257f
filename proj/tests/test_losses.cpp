#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "light/losses.hpp"
#include "test_util.hpp"

using namespace light;

namespace {

double bce_ref(double logit, double target) {
  double p = 1.0 / (1.0 + std::exp(-logit));
  return -(target * std::log(p) + (1 - target) * std::log(1 - p));
}

double smooth_l1_ref(double e, double beta) {
  double a = std::abs(e);
  return a < beta ? 0.5 * e * e / beta : a - 0.5 * beta;
}

}  // namespace

TEST_CASE("detection loss: saturated perfect logits and zero box error vanish") {
  Rng rng(1);
  DetectionLossInputs<double> in;
  Tensor<double> logits({4, 1});
  in.rpn_obj_targets = Tensor<double>({4, 1});
  for (int i = 0; i < 4; ++i) {
    bool pos = i % 2 == 0;
    logits.v[i] = pos ? 20.0 : -20.0;  // clamped saturation stand-in
    in.rpn_obj_targets.v[i] = pos ? 1.0 : 0.0;
  }
  in.rpn_obj_logits = Var<double>::leaf(logits, true);
  in.rpn_box_pred = Var<double>::constant(Tensor<double>({2, 4}));
  in.rpn_box_targets = Tensor<double>({2, 4});
  in.roi_cls_logits = Var<double>::constant(logits);
  in.roi_cls_targets = in.rpn_obj_targets;
  in.roi_box_pred = Var<double>::constant(Tensor<double>({2, 4}));
  in.roi_box_targets = Tensor<double>({2, 4});
  auto loss = detection_loss(in);
  CHECK(loss.val().v[0] < 1e-6);
}

TEST_CASE("detection loss: single negative anchor at zero logit gives ln 2") {
  DetectionLossInputs<double> in;
  in.rpn_obj_logits = Var<double>::constant(Tensor<double>({1, 1}));
  in.rpn_obj_targets = Tensor<double>({1, 1});
  auto loss = detection_loss(in);
  CHECK(loss.val().v[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("detection loss: no positives leaves only classification terms") {
  DetectionLossInputs<double> in;
  Tensor<double> logits({3, 1});
  logits.v = {0.5, -0.2, 1.0};
  in.rpn_obj_logits = Var<double>::constant(logits);
  in.rpn_obj_targets = Tensor<double>({3, 1});
  in.rpn_box_pred = Var<double>::constant(Tensor<double>({0, 4}));
  in.rpn_box_targets = Tensor<double>({0, 4});
  auto loss = detection_loss(in);
  double expect = (bce_ref(0.5, 0) + bce_ref(-0.2, 0) + bce_ref(1.0, 0)) / 3.0;
  CHECK(loss.val().v[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("detection loss matches a hand-rolled per-element loop oracle") {
  Rng rng(2);
  int s = 6, p = 3, s2 = 5, p2 = 2;
  DetectionLossInputs<double> in;
  Tensor<double> rpn_logits = Tensor<double>::randn({s, 1}, rng);
  in.rpn_obj_targets = Tensor<double>({s, 1});
  for (auto& v : in.rpn_obj_targets.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Tensor<double> rpn_box = Tensor<double>::randn({p, 4}, rng);
  in.rpn_box_targets = Tensor<double>::randn({p, 4}, rng);
  Tensor<double> roi_logits = Tensor<double>::randn({s2, 1}, rng);
  in.roi_cls_targets = Tensor<double>({s2, 1});
  for (auto& v : in.roi_cls_targets.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Tensor<double> roi_box = Tensor<double>::randn({p2, 4}, rng);
  in.roi_box_targets = Tensor<double>::randn({p2, 4}, rng);

  in.rpn_obj_logits = Var<double>::constant(rpn_logits);
  in.rpn_box_pred = Var<double>::constant(rpn_box);
  in.roi_cls_logits = Var<double>::constant(roi_logits);
  in.roi_box_pred = Var<double>::constant(roi_box);
  auto loss = detection_loss(in);

  double oracle = 0;
  for (int i = 0; i < s; ++i) oracle += bce_ref(rpn_logits.v[i], in.rpn_obj_targets.v[i]) / s;
  double rb = 0;
  for (int i = 0; i < p * 4; ++i)
    rb += smooth_l1_ref(rpn_box.v[i] - in.rpn_box_targets.v[i], 1.0 / 9.0);
  oracle += rb / p;
  for (int i = 0; i < s2; ++i) oracle += bce_ref(roi_logits.v[i], in.roi_cls_targets.v[i]) / s2;
  double ob = 0;
  for (int i = 0; i < p2 * 4; ++i)
    ob += smooth_l1_ref(roi_box.v[i] - in.roi_box_targets.v[i], 1.0);
  oracle += ob / p2;
  CHECK(loss.val().v[0] == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("mask loss: zero logits give ln 2 regardless of targets") {
  Rng rng(3);
  auto logits = Var<double>::constant(Tensor<double>({3, 1, 4, 4}));
  Tensor<double> targets({3, 1, 4, 4});
  for (auto& v : targets.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  CHECK(mask_loss(logits, targets).val().v[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("mask loss: saturated perfect logits vanish; zero positives give 0") {
  Tensor<double> logits({2, 1, 2, 2});
  Tensor<double> targets({2, 1, 2, 2});
  for (size_t i = 0; i < logits.numel(); ++i) {
    targets.v[i] = i % 2 ? 1.0 : 0.0;
    logits.v[i] = i % 2 ? 20.0 : -20.0;
  }
  CHECK(mask_loss(Var<double>::constant(logits), targets).val().v[0] < 1e-6);

  auto empty = Var<double>::constant(Tensor<double>({0, 1, 28, 28}));
  CHECK(mask_loss(empty, Tensor<double>({0, 1, 28, 28})).val().v[0] == 0.0);
}

TEST_CASE("mask loss matches loop oracle") {
  Rng rng(4);
  Tensor<double> logits = Tensor<double>::randn({2, 1, 3, 3}, rng);
  Tensor<double> targets({2, 1, 3, 3});
  for (auto& v : targets.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  double oracle = 0;
  for (size_t i = 0; i < logits.numel(); ++i) oracle += bce_ref(logits.v[i], targets.v[i]);
  oracle /= static_cast<double>(logits.numel());
  CHECK(mask_loss(Var<double>::constant(logits), targets).val().v[0] ==
        doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("height loss: analytic values at uniform errors") {
  auto mk = [](double err) {
    auto pred = Var<double>::constant(Tensor<double>::full({1, 1, 4, 4}, err));
    Tensor<double> gt({1, 1, 4, 4});
    return height_loss(pred, gt).val().v[0];
  };
  CHECK(mk(0.0) == doctest::Approx(0.0));
  CHECK(mk(0.5) == doctest::Approx(0.125));
  CHECK(mk(2.0) == doctest::Approx(1.5));
}

TEST_CASE("height loss: buildings-only mask restricts the mean") {
  Tensor<double> gt({1, 1, 2, 2});
  gt.v = {0.5, 0.0, 0.0, 0.0};
  Tensor<double> mask({1, 1, 2, 2});
  mask.v = {1, 0, 0, 0};
  auto pred = Var<double>::constant(Tensor<double>({1, 1, 2, 2}));  // all zeros
  // Only the masked pixel contributes: error 0.5 -> 0.125.
  CHECK(height_loss(pred, gt, 1.0, &mask).val().v[0] == doctest::Approx(0.125));
  // Empty mask -> 0.
  Tensor<double> none({1, 1, 2, 2});
  CHECK(height_loss(pred, gt, 1.0, &none).val().v[0] == 0.0);
}

TEST_CASE("height loss rejects shape mismatch") {
  auto pred = Var<double>::constant(Tensor<double>({1, 1, 2, 2}));
  Tensor<double> gt({1, 1, 3, 3});
  CHECK_THROWS_AS(height_loss(pred, gt), Error);
}

TEST_CASE("total loss: weighted sum, linearity, and non-finite detection") {
  auto mk_scalar = [](double v) { return Var<double>::constant(Tensor<double>::scalar(v)); };
  LossWeights w;
  LossReport rep;
  auto t = total_loss(mk_scalar(0.5), mk_scalar(0.3), mk_scalar(0.2), w, &rep);
  CHECK(t.val().v[0] == doctest::Approx(1.0));
  CHECK(rep.total == doctest::Approx(1.0));

  CHECK(total_loss(mk_scalar(0), mk_scalar(0), mk_scalar(0), w).val().v[0] == 0.0);

  // Doubling the height weight doubles exactly the height contribution.
  LossWeights w2 = w;
  w2.height = 2.0;
  auto t2 = total_loss(mk_scalar(0.5), mk_scalar(0.3), mk_scalar(0.2), w2);
  CHECK(t2.val().v[0] - t.val().v[0] == doctest::Approx(0.2).epsilon(1e-12));

  // Linearity in each weight.
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    LossWeights lw{rng.uniform(), rng.uniform(), rng.uniform()};
    auto base = total_loss(mk_scalar(a), mk_scalar(b), mk_scalar(c), lw).val().v[0];
    LossWeights scaled = lw;
    scaled.det *= 3.0;
    auto up = total_loss(mk_scalar(a), mk_scalar(b), mk_scalar(c), scaled).val().v[0];
    CHECK(up - base == doctest::Approx(2.0 * lw.det * a).epsilon(1e-9));
  }

  auto bad = mk_scalar(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(total_loss(mk_scalar(0.1), bad, mk_scalar(0.2), w),
                       doctest::Contains("mask"), Error);
}

TEST_CASE("all loss parts are nonnegative on random inputs") {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    Tensor<double> logits = Tensor<double>::randn({5, 1}, rng, 3.0);
    Tensor<double> targets({5, 1});
    for (auto& v : targets.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    CHECK(classification_loss(Var<double>::constant(logits), targets).val().v[0] >= 0.0);
    Tensor<double> pred = Tensor<double>::randn({3, 4}, rng);
    Tensor<double> tgt = Tensor<double>::randn({3, 4}, rng);
    CHECK(box_regression_loss(Var<double>::constant(pred), tgt, 1.0).val().v[0] >= 0.0);
  }
}

TEST_CASE("loss gradients flow through all branches") {
  Rng rng(7);
  auto det_in = Var<double>::leaf(Tensor<double>::randn({4, 1}, rng), true);
  auto mask_in = Var<double>::leaf(Tensor<double>::randn({2, 1, 3, 3}, rng), true);
  auto height_in = Var<double>::leaf(Tensor<double>::randn({1, 1, 4, 4}, rng), true);
  Tensor<double> dt({4, 1});
  Tensor<double> mt({2, 1, 3, 3});
  Tensor<double> ht = Tensor<double>::rand_uniform({1, 1, 4, 4}, rng, 0.0, 1.0);
  LossWeights w{0.7, 1.3, 2.1};
  auto fwd = [&] {
    auto d = classification_loss(det_in, dt);
    auto m = mask_loss(mask_in, mt);
    auto h = height_loss(height_in, ht);
    return total_loss(d, m, h, w);
  };
  auto res = light::testing::check_gradients(fwd, {det_in, mask_in, height_in}, rng);
  CHECK(res.ok);
}
