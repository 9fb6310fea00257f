#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "light/engine.hpp"

using namespace light;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("light_engine_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

SceneSpec tiny_scene_spec(uint64_t seed = 5) {
  SceneSpec s;
  s.image_size = 64;
  s.n_buildings_range = {1, 3};
  s.footprint_range = {8, 22};
  s.texture_noise = 0.02;
  s.seed = seed;
  return s;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.mode = TaskMode::JointGcti;
  c.lr = 0.005;
  c.epochs = 2;
  c.batch_size = 2;
  c.image_size = 64;
  c.warmup_steps = 10;
  c.lr_decay_epochs = {};
  c.seed = 9;
  c.log_every = 0;
  c.model.backbone.depth = {1, 1, 1, 1};
  c.model.backbone.width = 8;
  c.model.backbone.fpn_channels = 16;
  c.model.ppm_bins = {1, 2, 3};
  c.model.anchor_scales = {8, 16, 32, 64};
  c.model.fc_dim = 32;
  c.model.roi_sample = 16;
  c.model.proposals.pre_nms = 200;
  c.model.proposals.post_nms = 32;
  return c;
}

std::string make_dataset(const std::string& tag, int n, uint64_t seed = 5) {
  auto dir = temp_dir(tag);
  write_dataset(tiny_scene_spec(seed), n, dir);
  return dir;
}

}  // namespace

TEST_CASE("train config defaults echo the published recipe") {
  TrainConfig c;
  CHECK(c.momentum == 0.9);
  CHECK(c.weight_decay == 1e-4);
  CHECK(c.epochs == 36);
  CHECK(c.batch_size == 2);
  CHECK(c.lr == 0.02);
  CHECK(c.image_size == 512);
  CHECK(c.warmup_steps == 500);
  CHECK(c.lr_decay_epochs == std::vector<int>({24, 33}));
  CHECK(c.model.loss_weights.det == 1.0);
  CHECK(c.model.loss_weights.mask == 1.0);
  CHECK(c.model.loss_weights.height == 1.0);
}

TEST_CASE("train config json round trip") {
  auto c = tiny_train_config();
  c.mode = TaskMode::SegOnly;
  c.model.gcti.share_gate_params = true;
  c.model.height_loss_buildings_only = true;
  c.seed = 1234567;
  auto j = train_config_to_json(c);
  auto back = train_config_from_json(j);
  CHECK(train_config_to_json(back).dump() == j.dump());
  CHECK(back.mode == TaskMode::SegOnly);
  CHECK(back.seed == 1234567);
  CHECK(back.model.backbone.width == 8);
}

TEST_CASE("config validation catches bad values") {
  auto c = tiny_train_config();
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_train_config();
  c.image_size = 100;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("divisible by 32"), Error);
  CHECK_THROWS_AS(task_mode_from_name("bogus"), Error);
}

TEST_CASE("LIGHT_SEED environment override") {
  auto c = tiny_train_config();
  setenv("LIGHT_SEED", "777", 1);
  apply_env_seed(c);
  CHECK(c.seed == 777);
  setenv("LIGHT_SEED", "not_a_number", 1);
  CHECK_THROWS_AS(apply_env_seed(c), Error);
  unsetenv("LIGHT_SEED");
}

TEST_CASE("sgd: hand-computed first step with fresh buffer") {
  ParamRegistry<float> reg;
  auto p = reg.add_param("p", Tensor<float>::full({1}, 2.0f));
  p.node().ensure_grad();
  p.node().grad.v[0] = 0.5f;
  Sgd sgd(0.9, 1e-4);
  sgd.step(reg, 0.02);
  // v = g + wd*p = 0.5 + 1e-4*2 = 0.5002; p' = 2 - 0.02*0.5002.
  CHECK(p.val().v[0] == doctest::Approx(2.0 - 0.02 * 0.5002).epsilon(1e-7));
  // Second step with the same gradient uses the momentum buffer.
  float p1 = p.val().v[0];
  p.node().grad.v[0] = 0.5f;
  sgd.step(reg, 0.02);
  double v2 = 0.9 * 0.5002 + (0.5 + 1e-4 * p1);
  CHECK(p.val().v[0] == doctest::Approx(p1 - 0.02 * v2).epsilon(1e-6));
}

TEST_CASE("sgd: lr=0 leaves parameters identical") {
  ParamRegistry<float> reg;
  Rng rng(1);
  auto p = reg.add_param("p", Tensor<float>::randn({4, 4}, rng));
  auto before = p.val();
  p.node().ensure_grad();
  for (auto& g : p.node().grad.v) g = 1.0f;
  Sgd sgd(0.9, 1e-4);
  sgd.step(reg, 0.0);
  sgd.step(reg, 0.0);
  CHECK(p.val().v == before.v);
}

TEST_CASE("gradient clipping scales to the requested norm") {
  ParamRegistry<float> reg;
  auto p = reg.add_param("p", Tensor<float>({2}));
  p.node().ensure_grad();
  p.node().grad.v = {3.0f, 4.0f};  // norm 5
  double norm = Sgd::clip_gradients(reg, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(p.grad().v[0] == doctest::Approx(0.6f).epsilon(1e-5));
  CHECK(p.grad().v[1] == doctest::Approx(0.8f).epsilon(1e-5));
  // Disabled clipping leaves gradients alone.
  p.node().grad.v = {3.0f, 4.0f};
  Sgd::clip_gradients(reg, 0.0);
  CHECK(p.grad().v[0] == 3.0f);
}

TEST_CASE("joint mode equals the pyramid without interaction") {
  auto cfg = tiny_train_config();
  LightModel<float> model(cfg.model, 11);
  Rng rng(2);
  Tensor<float> img = Tensor<float>::rand_uniform({1, 3, 64, 64}, rng, 0.0f, 1.0f);
  auto joint = model.forward_features(Var<float>::constant(img), TaskMode::Joint, false);
  auto stages = model.fx.forward_backbone(Var<float>::constant(img), false);
  auto raw_levels = model.fx.forward_fpn(stages);
  for (int i = 0; i < 4; ++i) CHECK(joint.levels[i].val().v == raw_levels[i].val().v);
  // joint+gcti differs (interaction enabled) but keeps shapes.
  auto gcti = model.forward_features(Var<float>::constant(img), TaskMode::JointGcti, false);
  for (int i = 0; i < 4; ++i) {
    CHECK(gcti.levels[i].val().shape == joint.levels[i].val().shape);
    CHECK(gcti.levels[i].val().v != joint.levels[i].val().v);
  }
}

TEST_CASE("zero-initialized heads run the degenerate path without crashing") {
  auto cfg = tiny_train_config();
  LightModel<float> model(cfg.model, 3);
  for (auto& [name, p] : model.reg.params)
    if (name.rfind("rpn.", 0) == 0 || name.rfind("box_head.", 0) == 0 ||
        name.rfind("mask_head.", 0) == 0)
      p.val_mut().zero();
  Rng rng(3);
  Tensor<float> img = Tensor<float>::rand_uniform({1, 3, 64, 64}, rng, 0.0f, 1.0f);
  auto pred = model.forward_eval(img, TaskMode::JointGcti);
  CHECK(pred.height.meters.dim(0) == 64);
  for (auto& inst : pred.instances.items) {
    CHECK(inst.box.x2 > inst.box.x1);
    CHECK(inst.score == doctest::Approx(0.5));
  }
  auto again = model.forward_eval(img, TaskMode::JointGcti);
  CHECK(again.instances.size() == pred.instances.size());
}

TEST_CASE("training on a tiny dataset improves the loss and writes artifacts") {
  auto data = make_dataset("train_basic", 8);
  auto out = temp_dir("run_basic");
  auto cfg = tiny_train_config();
  cfg.epochs = 3;
  auto result = train(cfg, data, out);
  REQUIRE(!result.log.empty());
  double first = result.log.front().loss.total;
  double last = result.log.back().loss.total;
  CHECK(last < first);
  CHECK(fs::exists(out + "/best.ckpt"));
  CHECK(fs::exists(out + "/last.ckpt"));
  CHECK(fs::exists(out + "/train_log.json"));
}

TEST_CASE("fixed seed reproduces the exact loss trajectory and metrics") {
  auto data = make_dataset("train_det", 6);
  auto cfg = tiny_train_config();
  auto out_a = temp_dir("det_a");
  auto out_b = temp_dir("det_b");
  auto ra = train(cfg, data, out_a);
  auto rb = train(cfg, data, out_b);
  REQUIRE(ra.log.size() == rb.log.size());
  for (size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].loss.total == rb.log[i].loss.total);
    CHECK(ra.log[i].loss.det == rb.log[i].loss.det);
    CHECK(ra.log[i].loss.height == rb.log[i].loss.height);
  }
  CHECK(ra.val_metrics.to_json().dump() == rb.val_metrics.to_json().dump());
  // Different seed diverges.
  auto cfg2 = cfg;
  cfg2.seed = cfg.seed + 1;
  auto rc = train(cfg2, data, temp_dir("det_c"));
  CHECK(rc.log.front().loss.total != ra.log.front().loss.total);
}

TEST_CASE("checkpoint round trip is byte-stable and preserves evaluation") {
  auto data = make_dataset("ckpt_rt", 6);
  auto out = temp_dir("ckpt_run");
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  auto result = train(cfg, data, out);

  auto ckpt = Checkpoint::load(result.checkpoint_path);
  auto resaved = out + "/resaved.ckpt";
  ckpt.save(resaved);
  CHECK(file_hash(result.checkpoint_path) == file_hash(resaved));

  auto rep1 = evaluate_checkpoint(result.checkpoint_path, data, "val", "");
  auto rep2 = evaluate_checkpoint(resaved, data, "val", "");
  CHECK(rep1.to_json().dump() == rep2.to_json().dump());
}

TEST_CASE("checkpoint refuses a mismatched model") {
  auto data = make_dataset("ckpt_mismatch", 4);
  auto out = temp_dir("ckpt_mismatch_run");
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  auto result = train(cfg, data, out);
  auto ckpt = Checkpoint::load(result.checkpoint_path);
  ckpt.config["model"]["backbone"]["width"] = 16;  // not what the weights were built for
  CHECK_THROWS_AS(model_from_checkpoint(ckpt), Error);
}

TEST_CASE("evaluate: ground truth injected as predictions scores perfectly") {
  auto spec = tiny_scene_spec(21);
  std::vector<InstanceSet> gt_sets;
  std::vector<HeightMap> gt_heights;
  for (int i = 0; i < 4; ++i) {
    auto s = generate_scene(spec, i);
    if (s.instances.empty()) continue;
    gt_sets.push_back(s.instances);
    gt_heights.push_back(s.height);
  }
  REQUIRE(!gt_sets.empty());
  auto preds = gt_sets;
  for (auto& set : preds)
    for (auto& inst : set.items) inst.score = 1.0;
  auto rep = compute_metrics(preds, gt_sets, gt_heights, gt_heights);
  CHECK(*rep.mask_ap.map == doctest::Approx(100.0));
  CHECK(*rep.mask_ap.ap50 == doctest::Approx(100.0));
  CHECK(*rep.delta1 == doctest::Approx(100.0));
  CHECK(*rep.delta3 == doctest::Approx(100.0));
}

TEST_CASE("evaluate: empty predictions give zero AP; flat half-scale heights score deltas") {
  auto spec = tiny_scene_spec(22);
  std::vector<InstanceSet> gts;
  std::vector<InstanceSet> empty_preds;
  std::vector<HeightMap> gt_heights, flat_preds;
  for (int i = 0; i < 3; ++i) {
    auto s = generate_scene(spec, i);
    gts.push_back(s.instances);
    InstanceSet none;
    none.width = none.height = spec.image_size;
    empty_preds.push_back(none);
    gt_heights.push_back(s.height);
    HeightMap flat;
    flat.h_max = s.height.h_max;
    flat.meters = Tensor<float>::full({spec.image_size, spec.image_size},
                                      0.5f * s.height.h_max);
    flat_preds.push_back(flat);
  }
  auto rep = compute_metrics(empty_preds, gts, flat_preds, gt_heights);
  if (rep.n_gt > 0) {
    CHECK(*rep.mask_ap.map == 0.0);
    CHECK(*rep.mask_ap.ap50 == 0.0);
  }
  CHECK(rep.delta1.has_value());  // computed, not N/A
}

TEST_CASE("evaluate_checkpoint respects single-task modes") {
  auto data = make_dataset("modes", 6);
  auto cfg = tiny_train_config();
  cfg.epochs = 1;

  cfg.mode = TaskMode::SegOnly;
  auto seg = train(cfg, data, temp_dir("run_seg"));
  auto seg_rep = evaluate_checkpoint(seg.checkpoint_path, data, "val", "");
  CHECK(!seg_rep.delta1.has_value());  // height columns are N/A

  cfg.mode = TaskMode::HeightOnly;
  auto ho = train(cfg, data, temp_dir("run_height"));
  auto ho_rep = evaluate_checkpoint(ho.checkpoint_path, data, "val", "");
  CHECK(!ho_rep.mask_ap.map.has_value());  // AP columns are N/A
  CHECK(ho_rep.delta1.has_value());
}

TEST_CASE("evaluate errors on a missing split or checkpoint") {
  auto data = make_dataset("eval_err", 4);
  CHECK_THROWS_AS(evaluate_checkpoint(data + "/missing.ckpt", data, "val", ""), Error);
}

TEST_CASE("non-finite loss aborts with a numeric error naming the part") {
  auto cfg = tiny_train_config();
  LightModel<float> model(cfg.model, 1);
  // Poison the height head so its loss is NaN.
  model.height_head.conv2.w.val_mut().v[0] = std::numeric_limits<float>::quiet_NaN();
  auto spec = tiny_scene_spec(31);
  auto sample = generate_scene(spec, 0);
  std::vector<TrainingTarget> targets{{&sample.instances, &sample.height}};
  Rng rng(1);
  try {
    model.forward_train(sample.image.chw, targets, TaskMode::JointGcti, rng);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
    CHECK(std::string(e.what()).find("height") != std::string::npos);
  }
}

TEST_CASE("infer writes re-readable outputs deterministically") {
  auto data = make_dataset("infer", 6);
  auto out = temp_dir("infer_run");
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  auto result = train(cfg, data, out);

  auto preds_a = temp_dir("preds_a");
  auto preds_b = temp_dir("preds_b");
  infer(result.checkpoint_path, data + "/000000/image.png", preds_a);
  infer(result.checkpoint_path, data + "/000000/image.png", preds_b);
  for (const char* f : {"/instances.json", "/height.grid", "/overlay_instances.png",
                        "/overlay_height.png"}) {
    CHECK(fs::exists(preds_a + f));
    CHECK(file_hash(preds_a + f) == file_hash(preds_b + f));
  }
  // Outputs parse back into the dataset formats.
  auto grid = read_grid(preds_a + "/height.grid");
  CHECK(grid.dim(0) == 64);
  std::ifstream in(preds_a + "/instances.json");
  nlohmann::json j;
  in >> j;
  CHECK(j.is_array());
  for (auto& inst : j) {
    CHECK(inst.contains("box"));
    CHECK(inst.contains("score"));
    auto mask = rle_decode(inst["rle_mask"]["counts"].get<std::vector<int>>(),
                           inst["rle_mask"]["size"][0], inst["rle_mask"]["size"][1]);
    CHECK(mask.dim(0) == 64);
  }
}

TEST_CASE("bench: n=1 reports the single sample as mean and median") {
  auto data = make_dataset("bench", 4);
  auto out = temp_dir("bench_run");
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  auto result = train(cfg, data, out);
  auto report = bench(result.checkpoint_path, 1, out + "/bench.json");
  CHECK(report["n"] == 1);
  CHECK(report["joint"]["mean_ms"] == report["joint"]["median_ms"]);
  for (const char* key : {"joint", "seg_only", "height_only"}) {
    CHECK(report[key].contains("mean_ms"));
    CHECK(report[key]["mean_ms"].get<double>() > 0.0);
  }
  CHECK(report.contains("joint_vs_sum_ratio"));
  CHECK(fs::exists(out + "/bench.json"));
}

TEST_CASE("warmup and decay schedule shape") {
  auto data = make_dataset("sched", 4);
  auto cfg = tiny_train_config();
  cfg.epochs = 3;
  cfg.warmup_steps = 4;
  cfg.lr = 0.01;
  cfg.lr_decay_epochs = {2};
  auto result = train(cfg, data, temp_dir("sched_run"));
  REQUIRE(result.log.size() >= 6);
  CHECK(result.log[0].lr == doctest::Approx(0.01 / 4));
  CHECK(result.log[3].lr == doctest::Approx(0.01));
  bool saw_decay = false;
  for (auto& s : result.log)
    if (s.epoch >= 2) {
      CHECK(s.lr == doctest::Approx(0.001));
      saw_decay = true;
    }
  CHECK(saw_decay);
}
