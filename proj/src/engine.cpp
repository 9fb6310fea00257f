#include "light/engine.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "light/ops_resize.hpp"

namespace light {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config (de)serialization ----

void TrainConfig::validate() const {
  model.validate();
  check_config(lr > 0, "train config: lr must be positive");
  check_config(momentum >= 0 && momentum < 1, "train config: momentum must be in [0,1)");
  check_config(weight_decay >= 0, "train config: weight_decay must be nonnegative");
  check_config(epochs >= 1, "train config: epochs must be >= 1");
  check_config(batch_size >= 1, "train config: batch_size must be >= 1");
  check_config(image_size >= 64 && image_size % 32 == 0,
               "train config: image_size must be >= 64 and divisible by 32");
  check_config(warmup_steps >= 0, "train config: warmup_steps must be nonnegative");
}

json train_config_to_json(const TrainConfig& c) {
  return json{
      {"mode", task_mode_name(c.mode)},
      {"optimizer",
       {{"type", "sgd"}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay}}},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"image_size", c.image_size},
      {"warmup_steps", c.warmup_steps},
      {"lr_decay_epochs", c.lr_decay_epochs},
      {"lr_decay_factor", c.lr_decay_factor},
      {"clip_grad_norm", c.clip_grad_norm},
      {"seed", c.seed},
      {"log_every", c.log_every},
      {"loss_weights",
       {{"det", c.model.loss_weights.det},
        {"mask", c.model.loss_weights.mask},
        {"height", c.model.loss_weights.height}}},
      {"model",
       {{"backbone",
         {{"depth", c.model.backbone.depth},
          {"width", c.model.backbone.width},
          {"fpn_channels", c.model.backbone.fpn_channels}}},
        {"gcti",
         {{"share_gate_params", c.model.gcti.share_gate_params},
          {"height_target_only", c.model.gcti.height_target_only},
          {"kernel", c.model.gcti.kernel}}},
        {"ppm_bins", c.model.ppm_bins},
        {"anchor_scales", c.model.anchor_scales},
        {"anchor_ratios", c.model.anchor_ratios},
        {"rpn",
         {{"pre_nms", c.model.proposals.pre_nms},
          {"post_nms", c.model.proposals.post_nms},
          {"nms_iou", c.model.proposals.nms_iou},
          {"sample", c.model.rpn_sample},
          {"pos_fraction", c.model.rpn_pos_fraction},
          {"pos_iou", c.model.rpn_pos_iou},
          {"neg_iou", c.model.rpn_neg_iou}}},
        {"roi",
         {{"sample", c.model.roi_sample},
          {"pos_fraction", c.model.roi_pos_fraction},
          {"pos_iou", c.model.roi_pos_iou},
          {"neg_iou", c.model.roi_neg_iou},
          {"fc_dim", c.model.fc_dim}}},
        {"post",
         {{"score_thresh", c.model.post.score_thresh},
          {"nms_iou", c.model.post.nms_iou},
          {"max_det", c.model.post.max_det}}},
        {"h_max", c.model.h_max},
        {"height_loss_buildings_only", c.model.height_loss_buildings_only},
        {"height_beta", c.model.height_beta}}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = task_mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.contains("momentum")) o.at("momentum").get_to(c.momentum);
      if (o.contains("weight_decay")) o.at("weight_decay").get_to(c.weight_decay);
    }
    if (j.contains("lr")) j.at("lr").get_to(c.lr);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("image_size")) j.at("image_size").get_to(c.image_size);
    if (j.contains("warmup_steps")) j.at("warmup_steps").get_to(c.warmup_steps);
    if (j.contains("lr_decay_epochs")) j.at("lr_decay_epochs").get_to(c.lr_decay_epochs);
    if (j.contains("lr_decay_factor")) j.at("lr_decay_factor").get_to(c.lr_decay_factor);
    if (j.contains("clip_grad_norm")) j.at("clip_grad_norm").get_to(c.clip_grad_norm);
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("log_every")) j.at("log_every").get_to(c.log_every);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      if (w.contains("det")) w.at("det").get_to(c.model.loss_weights.det);
      if (w.contains("mask")) w.at("mask").get_to(c.model.loss_weights.mask);
      if (w.contains("height")) w.at("height").get_to(c.model.loss_weights.height);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("backbone")) {
        const auto& b = m.at("backbone");
        if (b.contains("depth")) b.at("depth").get_to(c.model.backbone.depth);
        if (b.contains("width")) b.at("width").get_to(c.model.backbone.width);
        if (b.contains("fpn_channels")) b.at("fpn_channels").get_to(c.model.backbone.fpn_channels);
      }
      if (m.contains("gcti")) {
        const auto& g = m.at("gcti");
        if (g.contains("share_gate_params"))
          g.at("share_gate_params").get_to(c.model.gcti.share_gate_params);
        if (g.contains("height_target_only"))
          g.at("height_target_only").get_to(c.model.gcti.height_target_only);
        if (g.contains("kernel")) g.at("kernel").get_to(c.model.gcti.kernel);
      }
      if (m.contains("ppm_bins")) m.at("ppm_bins").get_to(c.model.ppm_bins);
      if (m.contains("anchor_scales")) m.at("anchor_scales").get_to(c.model.anchor_scales);
      if (m.contains("anchor_ratios")) m.at("anchor_ratios").get_to(c.model.anchor_ratios);
      if (m.contains("rpn")) {
        const auto& r = m.at("rpn");
        if (r.contains("pre_nms")) r.at("pre_nms").get_to(c.model.proposals.pre_nms);
        if (r.contains("post_nms")) r.at("post_nms").get_to(c.model.proposals.post_nms);
        if (r.contains("nms_iou")) r.at("nms_iou").get_to(c.model.proposals.nms_iou);
        if (r.contains("sample")) r.at("sample").get_to(c.model.rpn_sample);
        if (r.contains("pos_fraction")) r.at("pos_fraction").get_to(c.model.rpn_pos_fraction);
        if (r.contains("pos_iou")) r.at("pos_iou").get_to(c.model.rpn_pos_iou);
        if (r.contains("neg_iou")) r.at("neg_iou").get_to(c.model.rpn_neg_iou);
      }
      if (m.contains("roi")) {
        const auto& r = m.at("roi");
        if (r.contains("sample")) r.at("sample").get_to(c.model.roi_sample);
        if (r.contains("pos_fraction")) r.at("pos_fraction").get_to(c.model.roi_pos_fraction);
        if (r.contains("pos_iou")) r.at("pos_iou").get_to(c.model.roi_pos_iou);
        if (r.contains("neg_iou")) r.at("neg_iou").get_to(c.model.roi_neg_iou);
        if (r.contains("fc_dim")) r.at("fc_dim").get_to(c.model.fc_dim);
      }
      if (m.contains("post")) {
        const auto& p = m.at("post");
        if (p.contains("score_thresh")) p.at("score_thresh").get_to(c.model.post.score_thresh);
        if (p.contains("nms_iou")) p.at("nms_iou").get_to(c.model.post.nms_iou);
        if (p.contains("max_det")) p.at("max_det").get_to(c.model.post.max_det);
      }
      if (m.contains("h_max")) m.at("h_max").get_to(c.model.h_max);
      if (m.contains("height_loss_buildings_only"))
        m.at("height_loss_buildings_only").get_to(c.model.height_loss_buildings_only);
      if (m.contains("height_beta")) m.at("height_beta").get_to(c.model.height_beta);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_env_seed(TrainConfig& cfg) {
  if (const char* env = std::getenv("LIGHT_SEED")) {
    char* end = nullptr;
    uint64_t v = std::strtoull(env, &end, 10);
    check_config(end && *end == '\0', "LIGHT_SEED must be an integer");
    cfg.seed = v;
  }
}

// ---- optimizer ----

double Sgd::clip_gradients(ParamRegistry<float>& reg, double max_norm) {
  double sq = 0;
  for (auto& [name, p] : reg.params) {
    if (p.grad().v.empty()) continue;
    for (float g : p.grad().v) sq += static_cast<double>(g) * g;
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    float scale = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& [name, p] : reg.params) {
      if (p.grad().v.empty()) continue;
      for (float& g : p.node().grad.v) g *= scale;
    }
  }
  return norm;
}

void Sgd::step(ParamRegistry<float>& reg, double lr) {
  if (velocity_.empty())
    for (auto& [name, p] : reg.params) velocity_.emplace_back(p.val().shape);
  check_shape(velocity_.size() == reg.params.size(), "sgd: state/parameter mismatch");
  for (size_t i = 0; i < reg.params.size(); ++i) {
    auto& p = reg.params[i].second;
    auto& v = velocity_[i];
    auto& val = p.val_mut();
    const bool has_grad = !p.grad().v.empty();
    for (size_t k = 0; k < val.numel(); ++k) {
      float g = has_grad ? p.grad().v[k] : 0.0f;
      g += static_cast<float>(weight_decay_) * val.v[k];
      v.v[k] = static_cast<float>(momentum_) * v.v[k] + g;
      val.v[k] -= static_cast<float>(lr) * v.v[k];
    }
  }
}

// ---- shared helpers ----

std::pair<std::unique_ptr<LightModel<float>>, TrainConfig> model_from_checkpoint(
    const Checkpoint& ckpt) {
  TrainConfig cfg = train_config_from_json(ckpt.config);
  auto model = std::make_unique<LightModel<float>>(cfg.model, cfg.seed);
  check_data(ckpt.params.size() == model->reg.params.size(),
             "checkpoint: parameter count does not match the configured model");
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    auto& [name, tensor] = ckpt.params[i];
    auto& [mname, mvar] = model->reg.params[i];
    check_data(name == mname && tensor.shape == mvar.val().shape,
               "checkpoint: parameter mismatch at '" + name + "'");
    mvar.val_mut() = tensor;
  }
  check_data(ckpt.buffers.size() == model->reg.buffers.size(),
             "checkpoint: buffer count mismatch");
  for (size_t i = 0; i < ckpt.buffers.size(); ++i) {
    auto& [name, tensor] = ckpt.buffers[i];
    auto& [mname, mbuf] = model->reg.buffers[i];
    check_data(name == mname && tensor.shape == mbuf->shape,
               "checkpoint: buffer mismatch at '" + name + "'");
    *mbuf = tensor;
  }
  return {std::move(model), cfg};
}

namespace {

Checkpoint capture_checkpoint(const LightModel<float>& model, const TrainConfig& cfg,
                              const Sgd& sgd, int epoch, const json& metrics) {
  Checkpoint ckpt;
  ckpt.config = train_config_to_json(cfg);
  ckpt.epoch = epoch;
  ckpt.metrics = metrics;
  for (auto& [name, p] : model.reg.params) ckpt.params.emplace_back(name, p.val());
  for (auto& [name, b] : model.reg.buffers) ckpt.buffers.emplace_back(name, *b);
  ckpt.velocity = const_cast<Sgd&>(sgd).velocity();
  return ckpt;
}

double lr_at(const TrainConfig& cfg, int epoch, int64_t step) {
  double lr = cfg.lr;
  if (step < cfg.warmup_steps && cfg.warmup_steps > 0)
    lr *= static_cast<double>(step + 1) / cfg.warmup_steps;
  for (int de : cfg.lr_decay_epochs)
    if (epoch >= de) lr *= cfg.lr_decay_factor;
  return lr;
}

struct EvalOutputs {
  std::vector<InstanceSet> pred_instances, gt_instances;
  std::vector<HeightMap> pred_heights, gt_heights;
};

EvalOutputs run_inference(const LightModel<float>& model, TaskMode mode,
                          const std::vector<SyntheticSample>& samples) {
  EvalOutputs out;
  for (const auto& s : samples) {
    auto pred = model.forward_eval(s.image.chw, mode);
    out.gt_instances.push_back(s.instances);
    if (mode != TaskMode::HeightOnly) out.pred_instances.push_back(pred.instances);
    if (mode != TaskMode::SegOnly) {
      out.pred_heights.push_back(pred.height);
      out.gt_heights.push_back(s.height);
    }
  }
  return out;
}

MetricsReport score_outputs(const EvalOutputs& out) {
  return compute_metrics(out.pred_instances, out.gt_instances, out.pred_heights,
                         out.gt_heights);
}

}  // namespace

// ---- training ----

TrainResult train(const TrainConfig& cfg_in, const std::string& data_dir,
                  const std::string& out_dir) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  fs::create_directories(out_dir);

  auto train_set = Dataset::load(data_dir, "train");
  auto val_set = Dataset::load(data_dir, "val");
  check_data(!train_set.samples.empty(), "train: empty training split in " + data_dir);
  for (auto& s : train_set.samples)
    check_data(s.image.height() == cfg.image_size && s.image.width() == cfg.image_size,
               "train: dataset image size does not match configured image_size");

  LightModel<float> model(cfg.model, cfg.seed);
  Sgd sgd(cfg.momentum, cfg.weight_decay);
  Rng sample_rng(hash_combine(cfg.seed, 0x5a3f));

  TrainResult result;
  int64_t global_step = 0;
  Checkpoint last_good;
  bool have_last_good = false;

  const int n_train = static_cast<int>(train_set.samples.size());
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic per-epoch shuffle.
    Rng shuffle_rng(hash_combine(cfg.seed, 0xe90c + static_cast<uint64_t>(epoch)));
    for (int i = n_train - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      int bsz = std::min(cfg.batch_size, n_train - start);
      Tensor<float> batch({bsz, 3, cfg.image_size, cfg.image_size});
      std::vector<TrainingTarget> targets(bsz);
      for (int b = 0; b < bsz; ++b) {
        const auto& s = train_set.samples[order[start + b]];
        std::copy(s.image.chw.v.begin(), s.image.chw.v.end(),
                  batch.v.begin() + static_cast<size_t>(b) * s.image.chw.numel());
        targets[b].instances = &s.instances;
        targets[b].height = &s.height;
      }
      double lr = lr_at(cfg, epoch, global_step);
      LightModel<float>::TrainOutputs outs;
      try {
        outs = model.forward_train(batch, targets, cfg.mode, sample_rng);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Numeric && have_last_good) {
          last_good.save(out_dir + "/last_good.ckpt");
          std::fprintf(stderr, "aborting at epoch %d step %lld: %s (last good checkpoint saved)\n",
                       epoch, static_cast<long long>(global_step), e.what());
        }
        throw;
      }
      model.reg.zero_grad();
      outs.total.backward();
      Sgd::clip_gradients(model.reg, cfg.clip_grad_norm);
      sgd.step(model.reg, lr);

      StepLog log{epoch, static_cast<int>(global_step), lr, outs.report};
      result.log.push_back(log);
      if (cfg.log_every > 0 && global_step % cfg.log_every == 0)
        std::fprintf(stderr,
                     "epoch %2d step %5lld lr %.5f total %.4f (det %.4f mask %.4f height %.4f)\n",
                     epoch, static_cast<long long>(global_step), lr, outs.report.total,
                     outs.report.det, outs.report.mask, outs.report.height);
      ++global_step;
    }
    last_good = capture_checkpoint(model, cfg, sgd, epoch, json{});
    have_last_good = true;
    last_good.save(out_dir + "/last.ckpt");
  }

  // Final validation pass and checkpoint.
  MetricsReport metrics;
  if (!val_set.samples.empty()) {
    auto eval_out = run_inference(model, cfg.mode, val_set.samples);
    metrics = score_outputs(eval_out);
  }
  result.val_metrics = metrics;
  auto final_ckpt = capture_checkpoint(model, cfg, sgd, cfg.epochs - 1, metrics.to_json());
  result.checkpoint_path = out_dir + "/best.ckpt";
  final_ckpt.save(result.checkpoint_path);

  // Loss trajectory for reproducibility checks.
  json log = json::array();
  for (auto& s : result.log)
    log.push_back({{"epoch", s.epoch},
                   {"step", s.step},
                   {"lr", s.lr},
                   {"det", s.loss.det},
                   {"mask", s.loss.mask},
                   {"height", s.loss.height},
                   {"total", s.loss.total}});
  std::ofstream log_out(out_dir + "/train_log.json");
  log_out << json{{"config", train_config_to_json(cfg)},
                  {"steps", log},
                  {"val_metrics", metrics.to_json()}}
                 .dump(2)
          << "\n";
  return result;
}

// ---- evaluation ----

MetricsReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir,
                                  const std::string& split, const std::string& report_path) {
  auto ckpt = Checkpoint::load(ckpt_path);
  auto [model, cfg] = model_from_checkpoint(ckpt);
  auto data = Dataset::load(data_dir, split);
  check_data(!data.samples.empty(), "evaluate: split '" + split + "' is empty");
  auto outputs = run_inference(*model, cfg.mode, data.samples);
  auto report = score_outputs(outputs);
  if (!report_path.empty()) {
    json j = report.to_json();
    j["mode"] = task_mode_name(cfg.mode);
    j["split"] = split;
    j["config"] = ckpt.config;
    j["dataset_hash"] = file_hash(data_dir + "/manifest.json");
    std::ofstream out(report_path);
    check_data(out.good(), "evaluate: cannot write " + report_path);
    out << j.dump(2) << "\n";
  }
  return report;
}

// ---- inference on a single image ----

namespace {

// Small fixed palette for instance overlays.
const uint8_t kPalette[][3] = {{230, 80, 60},  {60, 160, 230}, {240, 200, 60}, {90, 200, 120},
                               {200, 100, 220}, {250, 140, 40}, {100, 220, 210}, {160, 120, 250}};

void draw_box_outline(RgbImage& img, const Box& b, const uint8_t* color) {
  int x1 = std::max(0, static_cast<int>(b.x1)), y1 = std::max(0, static_cast<int>(b.y1));
  int x2 = std::min(img.width - 1, static_cast<int>(b.x2) - 1);
  int y2 = std::min(img.height - 1, static_cast<int>(b.y2) - 1);
  for (int x = x1; x <= x2; ++x)
    for (int y : {y1, y2})
      if (y >= 0 && y < img.height)
        std::copy(color, color + 3, &img.rgb[(static_cast<size_t>(y) * img.width + x) * 3]);
  for (int y = y1; y <= y2; ++y)
    for (int x : {x1, x2})
      if (x >= 0 && x < img.width)
        std::copy(color, color + 3, &img.rgb[(static_cast<size_t>(y) * img.width + x) * 3]);
}

RgbImage render_instances(const ImageTile& image, const InstanceSet& set) {
  RgbImage img = to_rgb_image(image);
  for (size_t i = 0; i < set.items.size(); ++i) {
    const auto& inst = set.items[i];
    const uint8_t* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (inst.mask.numel() == static_cast<size_t>(img.width) * img.height)
      for (int p = 0; p < img.width * img.height; ++p)
        if (inst.mask.v[p])
          for (int c = 0; c < 3; ++c) {
            auto& px = img.rgb[static_cast<size_t>(p) * 3 + c];
            px = static_cast<uint8_t>(0.45 * px + 0.55 * color[c]);
          }
    draw_box_outline(img, inst.box, color);
  }
  return img;
}

// Five-stop blue->green->yellow->red ramp over normalized height.
void height_color(double t, uint8_t* rgb) {
  static const double stops[5][3] = {
      {20, 25, 60}, {40, 90, 180}, {60, 180, 120}, {230, 210, 70}, {220, 60, 40}};
  t = std::min(std::max(t, 0.0), 1.0) * 4.0;
  int k = std::min(3, static_cast<int>(t));
  double f = t - k;
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<uint8_t>(std::lround(stops[k][c] * (1 - f) + stops[k + 1][c] * f));
}

RgbImage render_height(const HeightMap& h) {
  RgbImage img;
  img.height = h.meters.dim(0);
  img.width = h.meters.dim(1);
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  for (size_t i = 0; i < h.meters.numel(); ++i)
    height_color(h.meters.v[i] / std::max(h.h_max, 1e-6f), &img.rgb[i * 3]);
  return img;
}

}  // namespace

void infer(const std::string& ckpt_path, const std::string& image_path,
           const std::string& out_dir) {
  auto ckpt = Checkpoint::load(ckpt_path);
  auto [model, cfg] = model_from_checkpoint(ckpt);
  fs::create_directories(out_dir);

  auto raw = read_png_rgb8(image_path);
  auto tile = to_image_tile(raw);
  if (tile.height() != cfg.image_size || tile.width() != cfg.image_size) {
    auto resized = bilinear_resize(Var<float>::constant(tile.chw), cfg.image_size,
                                   cfg.image_size);
    tile.chw = resized.val();
  }

  auto pred = model->forward_eval(tile.chw, cfg.mode);

  json instances = json::array();
  for (const auto& inst : pred.instances.items)
    instances.push_back(
        {{"box", {inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2}},
         {"score", inst.score},
         {"rle_mask",
          {{"size", {inst.mask.dim(0), inst.mask.dim(1)}}, {"counts", rle_encode(inst.mask)}}}});
  std::ofstream out(out_dir + "/instances.json");
  check_data(out.good(), "infer: cannot write " + out_dir + "/instances.json");
  out << instances.dump(2) << "\n";

  if (cfg.mode != TaskMode::SegOnly) {
    write_grid(out_dir + "/height.grid", pred.height.meters);
    write_png_rgb8(out_dir + "/overlay_height.png", render_height(pred.height));
  }
  write_png_rgb8(out_dir + "/overlay_instances.png", render_instances(tile, pred.instances));
}

// ---- bench ----

nlohmann::json bench(const std::string& ckpt_path, int n_images,
                     const std::string& report_path) {
  check_config(n_images >= 1, "bench: n must be >= 1");
  auto ckpt = Checkpoint::load(ckpt_path);
  auto [model, cfg] = model_from_checkpoint(ckpt);

  SceneSpec spec;
  spec.image_size = cfg.image_size;
  spec.footprint_range = {cfg.image_size / 10.0, cfg.image_size / 4.0};
  spec.seed = 20240901;
  auto sample = generate_scene(spec, 0);

  auto time_mode = [&](TaskMode mode) {
    for (int i = 0; i < 5; ++i) model->forward_eval(sample.image.chw, mode);
    std::vector<double> ms;
    for (int i = 0; i < n_images; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      model->forward_eval(sample.image.chw, mode);
      auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = ms;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0;
    for (double v : ms) mean += v;
    mean /= ms.size();
    double median = sorted[sorted.size() / 2];
    return std::pair{mean, median};
  };

  TaskMode joint_mode =
      cfg.mode == TaskMode::Joint ? TaskMode::Joint : TaskMode::JointGcti;
  auto [joint_mean, joint_median] = time_mode(joint_mode);
  auto [seg_mean, seg_median] = time_mode(TaskMode::SegOnly);
  auto [h_mean, h_median] = time_mode(TaskMode::HeightOnly);

  json j{{"n", n_images},
         {"image_size", cfg.image_size},
         {"joint_mode", task_mode_name(joint_mode)},
         {"joint", {{"mean_ms", joint_mean}, {"median_ms", joint_median}}},
         {"seg_only", {{"mean_ms", seg_mean}, {"median_ms", seg_median}}},
         {"height_only", {{"mean_ms", h_mean}, {"median_ms", h_median}}},
         {"single_task_sum_ms", seg_mean + h_mean},
         {"joint_vs_sum_ratio", joint_mean / (seg_mean + h_mean)},
         {"joint_faster_than_sum", joint_mean < seg_mean + h_mean}};
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    check_data(out.good(), "bench: cannot write " + report_path);
    out << j.dump(2) << "\n";
  }
  return j;
}

}  // namespace light
