#pragma once

#include <array>
#include <optional>
#include <string>

#include "light/rng.hpp"
#include "light/types.hpp"

namespace light {

struct SceneSpec {
  int image_size = 512;  // square, divisible by 32
  std::array<int, 2> n_buildings_range = {3, 12};
  std::array<double, 2> footprint_range = {20.0, 120.0};  // building side lengths, px
  std::array<double, 2> height_range = {3.0, 100.0};      // meters
  bool rotation = true;
  double texture_noise = 0.02;  // stddev of additive pixel noise, [0,1] units
  uint64_t seed = 0;

  void validate() const;
};

// One rectangular building in image coordinates. angle is radians about the
// center; 0 means axis-aligned.
struct Building {
  double cx = 0, cy = 0, w = 0, h = 0, angle = 0;
  double height_m = 0;
};

struct SampleMeta {
  uint64_t seed = 0;
  int index = 0;
  std::vector<Building> buildings;
};

struct SyntheticSample {
  ImageTile image;
  InstanceSet instances;  // amodal masks, sorted by descending height
  HeightMap height;
  SampleMeta meta;
};

// Rasterizes a fixed building list: per-instance masks (pixel centers,
// half-open edges), tallest-wins height map, shading + noise image quantized
// to 8 bits. Exposed separately so tests can place exact rectangles.
SyntheticSample render_sample(const SceneSpec& spec, std::vector<Building> buildings,
                              Rng& rng, int index = 0);

// Deterministic in (spec.seed, index).
SyntheticSample generate_scene(const SceneSpec& spec, int index);

// Shading ramp used for the image: monotone in height.
double height_shade(double height_m, double h_max);

struct DatasetManifest {
  SceneSpec spec;
  int n = 0;
  std::vector<std::string> train_ids, val_ids;
};

// Writes n samples plus manifest.json. Split is 90/10 by index (the last
// ceil(n/10) samples are validation) unless n_val >= 0 overrides the
// validation count.
DatasetManifest write_dataset(const SceneSpec& spec, int n, const std::string& dir,
                              int n_val = -1);

}  // namespace light
