#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "light/png_io.hpp"
#include "light/synthdata.hpp"

namespace light {

// Binary grid file: 16-byte header (magic "LGHT", u32 rows, u32 cols,
// u32 dtype; dtype 0 = float32 little-endian) followed by row-major values.
void write_grid(const std::string& path, const Tensor<float>& grid);
Tensor<float> read_grid(const std::string& path);

// Row-major run-length encoding; counts alternate zero-runs and one-runs,
// starting with zeros.
std::vector<int> rle_encode(const Tensor<uint8_t>& mask);
Tensor<uint8_t> rle_decode(const std::vector<int>& counts, int h, int w);

nlohmann::json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

// Sample directory layout: image.png, height.grid, instances.json.
void save_sample(const std::string& sample_dir, const SyntheticSample& sample);
SyntheticSample load_sample(const std::string& sample_dir, float h_max);

void write_manifest(const std::string& dataset_dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& dataset_dir);

std::string sample_id(int index);

uint64_t file_hash(const std::string& path);

// Eagerly loaded dataset split.
struct Dataset {
  std::string root;
  DatasetManifest manifest;
  std::vector<std::string> ids;
  std::vector<SyntheticSample> samples;

  static Dataset load(const std::string& dir, const std::string& split);
};

// Converts a packed RGB image to a CHW float tile in [0,1] and back.
ImageTile to_image_tile(const RgbImage& img);
RgbImage to_rgb_image(const ImageTile& tile);

}  // namespace light
