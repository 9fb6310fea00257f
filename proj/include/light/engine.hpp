#pragma once

#include <json.hpp>

#include "light/dataset_io.hpp"
#include "light/metrics.hpp"
#include "light/model.hpp"

namespace light {

struct TrainConfig {
  ModelConfig model;
  TaskMode mode = TaskMode::JointGcti;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 36;
  int batch_size = 2;
  int image_size = 512;
  int warmup_steps = 500;
  std::vector<int> lr_decay_epochs = {24, 33};
  double lr_decay_factor = 0.1;
  double clip_grad_norm = 10.0;  // <= 0 disables clipping
  uint64_t seed = 1;
  int log_every = 20;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// LIGHT_SEED, when set, overrides the config seed.
void apply_env_seed(TrainConfig& cfg);

// ---- checkpointing ----

struct Checkpoint {
  nlohmann::json config;  // TrainConfig echo
  int epoch = 0;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  std::vector<std::pair<std::string, Tensor<float>>> buffers;
  std::vector<Tensor<float>> velocity;  // optimizer state, aligned with params
  nlohmann::json metrics;               // last validation snapshot

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// ---- optimizer ----

// SGD with momentum and decoupled-from-nothing weight decay folded into the
// gradient: v = mu*v + (g + wd*p); p -= lr*v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ParamRegistry<float>& reg, double lr);
  // Global-norm gradient clipping; returns the pre-clip norm.
  static double clip_gradients(ParamRegistry<float>& reg, double max_norm);

  std::vector<Tensor<float>>& velocity() { return velocity_; }

 private:
  double momentum_, weight_decay_;
  std::vector<Tensor<float>> velocity_;
};

// ---- orchestration ----

struct StepLog {
  int epoch = 0, step = 0;
  double lr = 0;
  LossReport loss;
};

struct TrainResult {
  std::vector<StepLog> log;
  MetricsReport val_metrics;
  std::string checkpoint_path;
};

TrainResult train(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& out_dir);

// Runs inference over a split and scores it. Writes report.json when
// report_path is nonempty.
MetricsReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir,
                                  const std::string& split, const std::string& report_path);

// Prediction files plus rendered overlays for one image.
void infer(const std::string& ckpt_path, const std::string& image_path,
           const std::string& out_dir);

// Forward-latency comparison: joint pass vs the two single-task passes.
nlohmann::json bench(const std::string& ckpt_path, int n_images,
                     const std::string& report_path);

// Shared helper: rebuilds the model a checkpoint was trained with and loads
// its weights.
std::pair<std::unique_ptr<LightModel<float>>, TrainConfig> model_from_checkpoint(
    const Checkpoint& ckpt);

}  // namespace light
