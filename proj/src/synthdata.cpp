#include "light/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "light/dataset_io.hpp"

namespace light {

void SceneSpec::validate() const {
  check_config(image_size >= 64, "scene spec: image_size must be >= 64");
  check_config(image_size % 32 == 0, "scene spec: image_size must be divisible by 32");
  check_config(n_buildings_range[0] >= 0 && n_buildings_range[1] >= n_buildings_range[0],
               "scene spec: n_buildings_range must be a nonnegative interval");
  check_config(footprint_range[0] > 0 && footprint_range[1] >= footprint_range[0],
               "scene spec: footprint_range must be a positive interval");
  check_config(footprint_range[1] < image_size,
               "scene spec: footprint max must be smaller than image_size");
  check_config(height_range[0] > 0, "scene spec: height_range min must be positive");
  check_config(height_range[1] >= height_range[0],
               "scene spec: height_range must be ordered");
  check_config(texture_noise >= 0, "scene spec: texture_noise must be nonnegative");
}

double height_shade(double height_m, double h_max) {
  double t = std::min(std::max(height_m / std::max(h_max, 1e-9), 0.0), 1.0);
  return 0.30 + 0.65 * t;
}

namespace {

// Pixel-center test with half-open edges so a w x h axis-aligned rectangle
// covers exactly w*h pixels.
bool covers(const Building& b, double px, double py) {
  double dx = px - b.cx, dy = py - b.cy;
  double c = std::cos(b.angle), s = std::sin(b.angle);
  double u = dx * c + dy * s;
  double v = -dx * s + dy * c;
  return u >= -0.5 * b.w && u < 0.5 * b.w && v >= -0.5 * b.h && v < 0.5 * b.h;
}

Box building_bounds(const Building& b, int image_size) {
  double c = std::abs(std::cos(b.angle)), s = std::abs(std::sin(b.angle));
  double ex = 0.5 * (b.w * c + b.h * s) + 1.0;
  double ey = 0.5 * (b.w * s + b.h * c) + 1.0;
  Box out{b.cx - ex, b.cy - ey, b.cx + ex, b.cy + ey};
  return clip_box(out, image_size, image_size);
}

}  // namespace

SyntheticSample render_sample(const SceneSpec& spec, std::vector<Building> buildings,
                              Rng& rng, int index) {
  spec.validate();
  const int n = spec.image_size;
  SyntheticSample sample;
  sample.meta.seed = spec.seed;
  sample.meta.index = index;

  // Tallest first; ties keep insertion order.
  std::stable_sort(buildings.begin(), buildings.end(),
                   [](const Building& a, const Building& b) { return a.height_m > b.height_m; });
  sample.meta.buildings = buildings;

  sample.height.h_max = static_cast<float>(spec.height_range[1]);
  sample.height.meters = Tensor<float>({n, n});
  sample.instances.width = n;
  sample.instances.height = n;

  for (const auto& b : buildings) {
    Box bounds = building_bounds(b, n);
    int x0 = static_cast<int>(std::floor(bounds.x1)), x1 = static_cast<int>(std::ceil(bounds.x2));
    int y0 = static_cast<int>(std::floor(bounds.y1)), y1 = static_cast<int>(std::ceil(bounds.y2));
    Instance inst;
    inst.height_m = static_cast<float>(b.height_m);
    inst.mask = Tensor<uint8_t>({n, n});
    int min_x = n, min_y = n, max_x = -1, max_y = -1;
    for (int y = std::max(0, y0); y < std::min(n, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(n, x1); ++x) {
        if (!covers(b, x + 0.5, y + 0.5)) continue;
        inst.mask.v[static_cast<size_t>(y) * n + x] = 1;
        float& hm = sample.height.meters.v[static_cast<size_t>(y) * n + x];
        hm = std::max(hm, inst.height_m);  // tallest covering building wins
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    if (max_x < 0) continue;  // fully outside the frame
    inst.box = {static_cast<double>(min_x), static_cast<double>(min_y),
                static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
    sample.instances.items.push_back(std::move(inst));
  }

  // Shading follows the (tallest-wins) height field; background sits below
  // the dimmest building so instances are separable from RGB alone.
  const double bg = 0.12;
  RgbImage img;
  img.width = n;
  img.height = n;
  img.rgb.resize(static_cast<size_t>(n) * n * 3);
  const double tint[3] = {0.95, 1.0, 0.85};
  const double bg_tint[3] = {0.9, 1.0, 1.05};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      float h = sample.height.meters.v[static_cast<size_t>(y) * n + x];
      double base = h > 0 ? height_shade(h, spec.height_range[1]) : bg;
      const double* tt = h > 0 ? tint : bg_tint;
      for (int c = 0; c < 3; ++c) {
        double v = base * tt[c] + spec.texture_noise * rng.normal();
        v = std::min(std::max(v, 0.0), 1.0);
        img.rgb[(static_cast<size_t>(y) * n + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  sample.image = to_image_tile(img);
  return sample;
}

SyntheticSample generate_scene(const SceneSpec& spec, int index) {
  spec.validate();
  check_config(index >= 0, "generate_scene: index must be nonnegative");
  Rng rng = Rng::stream(spec.seed, static_cast<uint64_t>(index));

  int count = static_cast<int>(rng.uniform_int(spec.n_buildings_range[0],
                                               spec.n_buildings_range[1]));
  std::vector<Building> buildings;
  std::vector<Box> bounds;
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      Building b;
      b.w = rng.uniform(spec.footprint_range[0], spec.footprint_range[1]);
      b.h = rng.uniform(spec.footprint_range[0], spec.footprint_range[1]);
      b.angle = spec.rotation ? rng.uniform(0.0, M_PI) : 0.0;
      double margin = 0.5 * std::hypot(b.w, b.h);
      double lo = std::min(margin, spec.image_size / 2.0);
      double hi = std::max(spec.image_size - margin, spec.image_size / 2.0);
      b.cx = rng.uniform(lo, hi);
      b.cy = rng.uniform(lo, hi);
      b.height_m = rng.uniform(spec.height_range[0], spec.height_range[1]);
      Box bb = building_bounds(b, spec.image_size);
      bool crowded = false;
      for (const auto& other : bounds)
        if (box_iou(bb, other) > 0.25) {
          crowded = true;
          break;
        }
      if (crowded) continue;
      buildings.push_back(b);
      bounds.push_back(bb);
      break;
    }
  }
  return render_sample(spec, std::move(buildings), rng, index);
}

DatasetManifest write_dataset(const SceneSpec& spec, int n, const std::string& dir,
                              int n_val) {
  spec.validate();
  check_config(n >= 0, "write_dataset: n must be nonnegative");
  if (n_val < 0) n_val = (n + 9) / 10;  // default 90/10 split by index
  check_config(n_val <= n, "write_dataset: n_val exceeds n");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  check_data(!ec && fs::is_directory(dir), "write_dataset: cannot create directory " + dir);

  DatasetManifest manifest;
  manifest.spec = spec;
  manifest.n = n;
  for (int i = 0; i < n; ++i) {
    auto sample = generate_scene(spec, i);
    std::string id = sample_id(i);
    std::string sdir = dir + "/" + id;
    fs::create_directories(sdir, ec);
    check_data(!ec, "write_dataset: cannot create " + sdir);
    save_sample(sdir, sample);
    if (i < n - n_val)
      manifest.train_ids.push_back(id);
    else
      manifest.val_ids.push_back(id);
  }
  write_manifest(dir, manifest);
  return manifest;
}

}  // namespace light
