// Command-line front end: dataset generation, training, evaluation,
// single-image inference, and latency benchmarking.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "light/engine.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  light::check_config(in.good(), "cannot open config file " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw light::Error(light::ErrorKind::Config,
                       "malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"light: joint building segmentation and height estimation"};
  app.require_subcommand(1);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
  std::string dg_spec, dg_out;
  int dg_n = 100, dg_n_val = -1;
  datagen->add_option("--spec", dg_spec, "SceneSpec JSON file (defaults apply if omitted)");
  datagen->add_option("--n", dg_n, "number of samples")->required();
  datagen->add_option("--out", dg_out, "output dataset directory")->required();
  datagen->add_option("--n-val", dg_n_val,
                      "validation sample count (default: 10% by index)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_data, tr_out;
  train_cmd->add_option("--config", tr_config, "TrainConfig JSON file");
  train_cmd->add_option("--data", tr_data, "dataset directory")->required();
  train_cmd->add_option("--out", tr_out, "run output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "val", ev_out;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
  eval_cmd->add_option("--split", ev_split, "train|val|all");
  eval_cmd->add_option("--out", ev_out, "report.json output path");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "run inference on one image");
  std::string in_ckpt, in_image, in_out;
  infer_cmd->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
  infer_cmd->add_option("--image", in_image, "input PNG")->required();
  infer_cmd->add_option("--out", in_out, "output directory")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "measure forward latency per mode");
  std::string be_ckpt, be_out;
  int be_n = 50;
  bench_cmd->add_option("--ckpt", be_ckpt, "checkpoint path")->required();
  bench_cmd->add_option("--n", be_n, "timed runs per mode");
  bench_cmd->add_option("--out", be_out, "timing report output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*datagen) {
      light::SceneSpec spec;
      if (!dg_spec.empty()) spec = light::scene_spec_from_json(load_json(dg_spec));
      auto manifest = light::write_dataset(spec, dg_n, dg_out, dg_n_val);
      std::cout << "wrote " << manifest.n << " samples (" << manifest.train_ids.size()
                << " train / " << manifest.val_ids.size() << " val) to " << dg_out << "\n";
    } else if (*train_cmd) {
      light::TrainConfig cfg;
      if (!tr_config.empty()) cfg = light::train_config_from_json(load_json(tr_config));
      light::apply_env_seed(cfg);
      auto result = light::train(cfg, tr_data, tr_out);
      std::cout << "training done; checkpoint: " << result.checkpoint_path << "\n"
                << result.val_metrics.to_json().dump(2) << "\n";
    } else if (*eval_cmd) {
      auto report = light::evaluate_checkpoint(ev_ckpt, ev_data, ev_split, ev_out);
      std::cout << report.to_json().dump(2) << "\n";
    } else if (*infer_cmd) {
      light::infer(in_ckpt, in_image, in_out);
      std::cout << "predictions written to " << in_out << "\n";
    } else if (*bench_cmd) {
      auto report = light::bench(be_ckpt, be_n, be_out);
      std::cout << report.dump(2) << "\n";
    }
  } catch (const light::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
