#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "light/dataset_io.hpp"
#include "light/synthdata.hpp"

using namespace light;
namespace fs = std::filesystem;

namespace {

SceneSpec small_spec(uint64_t seed = 7) {
  SceneSpec s;
  s.image_size = 64;
  s.n_buildings_range = {1, 4};
  s.footprint_range = {8, 24};
  s.height_range = {3, 100};
  s.texture_noise = 0.02;
  s.seed = seed;
  return s;
}

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("light_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Painter's algorithm: rasterize buildings tallest-last so taller paint wins.
Tensor<float> painter_oracle(const SceneSpec& spec, std::vector<Building> buildings) {
  std::stable_sort(buildings.begin(), buildings.end(),
                   [](const Building& a, const Building& b) { return a.height_m < b.height_m; });
  Tensor<float> height({spec.image_size, spec.image_size});
  for (const auto& b : buildings) {
    double c = std::cos(b.angle), s = std::sin(b.angle);
    for (int y = 0; y < spec.image_size; ++y)
      for (int x = 0; x < spec.image_size; ++x) {
        double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy;
        double u = dx * c + dy * s, v = -dx * s + dy * c;
        if (u >= -0.5 * b.w && u < 0.5 * b.w && v >= -0.5 * b.h && v < 0.5 * b.h)
          height.v[static_cast<size_t>(y) * spec.image_size + x] =
              static_cast<float>(b.height_m);
      }
  }
  return height;
}

}  // namespace

TEST_CASE("empty scene: no instances, identically zero height map") {
  auto spec = small_spec();
  spec.n_buildings_range = {0, 0};
  auto sample = generate_scene(spec, 0);
  CHECK(sample.instances.empty());
  for (auto v : sample.height.meters.v) CHECK(v == 0.0f);
}

TEST_CASE("single axis-aligned 40x60 rectangle: exact mask area, box, heights") {
  SceneSpec spec = small_spec();
  spec.image_size = 128;
  Building b;
  b.cx = 30 + 20;  // x0 = 30
  b.cy = 40 + 30;  // y0 = 40
  b.w = 40;
  b.h = 60;
  b.angle = 0;
  b.height_m = 25;
  Rng rng(1);
  auto sample = render_sample(spec, {b}, rng);
  REQUIRE(sample.instances.size() == 1);
  const auto& inst = sample.instances.items[0];
  size_t area = 0;
  for (auto v : inst.mask.v) area += v;
  CHECK(area == 2400);
  CHECK(inst.box.x1 == 30.0);
  CHECK(inst.box.y1 == 40.0);
  CHECK(inst.box.x2 == 70.0);
  CHECK(inst.box.y2 == 100.0);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      bool inside = x >= 30 && x < 70 && y >= 40 && y < 100;
      CHECK(sample.height.meters.v[y * 128 + x] == (inside ? 25.0f : 0.0f));
    }
}

TEST_CASE("overlapping rectangles: taller height wins, matches painter oracle") {
  SceneSpec spec = small_spec();
  Building low{20, 20, 16, 16, 0, 10};
  Building tall{28, 24, 16, 12, 0, 30};
  Rng rng(2);
  auto sample = render_sample(spec, {low, tall}, rng);
  auto oracle = painter_oracle(spec, {low, tall});
  REQUIRE(sample.height.meters.numel() == oracle.numel());
  for (size_t i = 0; i < oracle.numel(); ++i)
    CHECK(sample.height.meters.v[i] == oracle.v[i]);
  // The overlap region carries 30 m.
  CHECK(sample.height.meters.v[24 * 64 + 24] == 30.0f);
  // Instances sorted by descending height.
  REQUIRE(sample.instances.size() == 2);
  CHECK(sample.instances.items[0].height_m == 30.0f);
  CHECK(sample.instances.items[1].height_m == 10.0f);
}

TEST_CASE("rotated buildings also match the painter oracle") {
  SceneSpec spec = small_spec();
  Building a{24, 30, 20, 10, 0.6, 45};
  Building b{34, 28, 14, 18, 2.2, 12};
  Rng rng(3);
  auto sample = render_sample(spec, {a, b}, rng);
  auto oracle = painter_oracle(spec, {a, b});
  for (size_t i = 0; i < oracle.numel(); ++i)
    CHECK(sample.height.meters.v[i] == oracle.v[i]);
}

TEST_CASE("generate_scene is a pure function of (spec, index)") {
  auto spec = small_spec(42);
  auto a = generate_scene(spec, 5);
  auto b = generate_scene(spec, 5);
  CHECK(a.image.chw.v == b.image.chw.v);
  CHECK(a.height.meters.v == b.height.meters.v);
  REQUIRE(a.instances.size() == b.instances.size());
  for (size_t i = 0; i < a.instances.size(); ++i)
    CHECK(a.instances.items[i].mask.v == b.instances.items[i].mask.v);
  auto c = generate_scene(spec, 6);
  CHECK(a.image.chw.v != c.image.chw.v);  // different index, different scene
}

TEST_CASE("consistency: mask union equals height support; boxes are tight") {
  auto spec = small_spec(11);
  for (int idx = 0; idx < 8; ++idx) {
    auto sample = generate_scene(spec, idx);
    Tensor<uint8_t> uni({spec.image_size, spec.image_size});
    for (const auto& inst : sample.instances.items) {
      size_t area = 0;
      int min_x = spec.image_size, min_y = spec.image_size, max_x = -1, max_y = -1;
      for (int y = 0; y < spec.image_size; ++y)
        for (int x = 0; x < spec.image_size; ++x)
          if (inst.mask.v[y * spec.image_size + x]) {
            uni.v[y * spec.image_size + x] = 1;
            ++area;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
          }
      CHECK(area > 0);  // nonempty masks
      CHECK(inst.box.x1 == min_x);
      CHECK(inst.box.y1 == min_y);
      CHECK(inst.box.x2 == max_x + 1);
      CHECK(inst.box.y2 == max_y + 1);
    }
    for (size_t i = 0; i < uni.numel(); ++i)
      CHECK((sample.height.meters.v[i] > 0.0f) == (uni.v[i] != 0));
  }
}

TEST_CASE("image intensity is monotone in building height (no noise)") {
  SceneSpec spec = small_spec();
  spec.texture_noise = 0.0;
  Rng rng(4);
  Building lo{16, 16, 10, 10, 0, 5};
  Building hi{48, 48, 10, 10, 0, 90};
  auto sample = render_sample(spec, {lo, hi}, rng);
  float v_lo = sample.image.chw.at(0, 1, 16, 16);
  float v_hi = sample.image.chw.at(0, 1, 48, 48);
  float v_bg = sample.image.chw.at(0, 1, 0, 0);
  CHECK(v_hi > v_lo);
  CHECK(v_lo > v_bg);
}

TEST_CASE("invalid specs are configuration errors naming the field") {
  auto spec = small_spec();
  spec.image_size = 60;
  CHECK_THROWS_WITH_AS(generate_scene(spec, 0), doctest::Contains("image_size"), Error);
  spec = small_spec();
  spec.height_range = {0.0, 50.0};
  CHECK_THROWS_WITH_AS(generate_scene(spec, 0), doctest::Contains("height_range"), Error);
  spec = small_spec();
  spec.footprint_range = {8.0, 64.0};
  CHECK_THROWS_WITH_AS(generate_scene(spec, 0), doctest::Contains("footprint"), Error);
  spec = small_spec();
  CHECK_THROWS_AS(generate_scene(spec, -1), Error);
}

TEST_CASE("grid file round trip") {
  Rng rng(5);
  auto dir = temp_dir("grid");
  Tensor<float> grid = Tensor<float>::rand_uniform({17, 23}, rng, 0.0f, 100.0f);
  write_grid(dir + "/h.grid", grid);
  auto back = read_grid(dir + "/h.grid");
  CHECK(back.shape == grid.shape);
  CHECK(back.v == grid.v);
  CHECK_THROWS_AS(read_grid(dir + "/missing.grid"), Error);
}

TEST_CASE("rle round trip on random masks") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    int h = 1 + static_cast<int>(rng.uniform_int(1, 31));
    int w = 1 + static_cast<int>(rng.uniform_int(1, 31));
    Tensor<uint8_t> mask({h, w});
    double density = rng.uniform();
    for (auto& v : mask.v) v = rng.uniform() < density ? 1 : 0;
    auto back = rle_decode(rle_encode(mask), h, w);
    CHECK(back.v == mask.v);
  }
  // All-zero and all-one masks.
  Tensor<uint8_t> zero({4, 4});
  CHECK(rle_decode(rle_encode(zero), 4, 4).v == zero.v);
  Tensor<uint8_t> one = Tensor<uint8_t>::full({4, 4}, 1);
  CHECK(rle_decode(rle_encode(one), 4, 4).v == one.v);
}

TEST_CASE("write_dataset: n=0 empty manifest, n=10 gives a 9/1 split") {
  auto spec = small_spec(3);
  auto dir0 = temp_dir("ds0");
  auto m0 = write_dataset(spec, 0, dir0);
  CHECK(m0.train_ids.empty());
  CHECK(m0.val_ids.empty());
  auto back0 = read_manifest(dir0);
  CHECK(back0.n == 0);

  auto dir = temp_dir("ds10");
  auto m = write_dataset(spec, 10, dir);
  CHECK(m.train_ids.size() == 9);
  CHECK(m.val_ids.size() == 1);
  CHECK(m.val_ids[0] == "000009");

  // Read back bit-identically.
  for (int i = 0; i < 10; ++i) {
    auto original = generate_scene(spec, i);
    auto loaded = load_sample(dir + "/" + sample_id(i),
                              static_cast<float>(spec.height_range[1]));
    CHECK(loaded.image.chw.v == original.image.chw.v);
    CHECK(loaded.height.meters.v == original.height.meters.v);
    REQUIRE(loaded.instances.size() == original.instances.size());
    for (size_t k = 0; k < loaded.instances.size(); ++k) {
      CHECK(loaded.instances.items[k].mask.v == original.instances.items[k].mask.v);
      CHECK(loaded.instances.items[k].box.x1 == original.instances.items[k].box.x1);
      CHECK(loaded.instances.items[k].height_m == original.instances.items[k].height_m);
    }
  }
}

TEST_CASE("regeneration writes byte-identical datasets") {
  auto spec = small_spec(99);
  auto dir_a = temp_dir("rega");
  auto dir_b = temp_dir("regb");
  write_dataset(spec, 4, dir_a);
  write_dataset(spec, 4, dir_b);
  CHECK(file_hash(dir_a + "/manifest.json") == file_hash(dir_b + "/manifest.json"));
  for (int i = 0; i < 4; ++i) {
    for (const char* f : {"/image.png", "/height.grid", "/instances.json"}) {
      auto rel = "/" + sample_id(i) + f;
      CHECK(file_hash(dir_a + rel) == file_hash(dir_b + rel));
    }
  }
}

TEST_CASE("dataset loader respects splits and custom validation count") {
  auto spec = small_spec(15);
  auto dir = temp_dir("split");
  write_dataset(spec, 12, dir, 2);
  auto train = Dataset::load(dir, "train");
  auto val = Dataset::load(dir, "val");
  CHECK(train.samples.size() == 10);
  CHECK(val.samples.size() == 2);
  CHECK_THROWS_AS(Dataset::load(dir, "test"), Error);
  CHECK_THROWS_AS(Dataset::load(temp_dir("nonexistent_ds"), "train"), Error);
}
