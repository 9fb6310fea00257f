#include "light/dataset_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace light {

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr char kGridMagic[4] = {'L', 'G', 'H', 'T'};

void write_grid(const std::string& path, const Tensor<float>& grid) {
  check_shape(grid.ndim() == 2, "write_grid: expected (H,W) tensor");
  std::ofstream out(path, std::ios::binary);
  check_data(out.good(), "write_grid: cannot open " + path);
  uint32_t rows = static_cast<uint32_t>(grid.dim(0));
  uint32_t cols = static_cast<uint32_t>(grid.dim(1));
  uint32_t dtype = 0;  // float32 little-endian
  out.write(kGridMagic, 4);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(&dtype), 4);
  out.write(reinterpret_cast<const char*>(grid.data()),
            static_cast<std::streamsize>(grid.numel() * sizeof(float)));
  check_data(out.good(), "write_grid: write failure for " + path);
}

Tensor<float> read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), "read_grid: cannot open " + path);
  char magic[4];
  uint32_t rows = 0, cols = 0, dtype = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  in.read(reinterpret_cast<char*>(&dtype), 4);
  check_data(in.good() && std::memcmp(magic, kGridMagic, 4) == 0,
             "read_grid: bad header in " + path);
  check_data(dtype == 0, "read_grid: unsupported dtype in " + path);
  Tensor<float> grid({static_cast<int>(rows), static_cast<int>(cols)});
  in.read(reinterpret_cast<char*>(grid.data()),
          static_cast<std::streamsize>(grid.numel() * sizeof(float)));
  check_data(in.good(), "read_grid: truncated data in " + path);
  return grid;
}

std::vector<int> rle_encode(const Tensor<uint8_t>& mask) {
  std::vector<int> counts;
  uint8_t current = 0;
  int run = 0;
  for (uint8_t v : mask.v) {
    uint8_t bit = v ? 1 : 0;
    if (bit == current) {
      ++run;
    } else {
      counts.push_back(run);
      current = bit;
      run = 1;
    }
  }
  counts.push_back(run);
  return counts;
}

Tensor<uint8_t> rle_decode(const std::vector<int>& counts, int h, int w) {
  Tensor<uint8_t> mask({h, w});
  size_t pos = 0;
  uint8_t bit = 0;
  for (int c : counts) {
    check_data(c >= 0 && pos + static_cast<size_t>(c) <= mask.numel(),
               "rle_decode: counts exceed mask size");
    if (bit)
      for (int i = 0; i < c; ++i) mask.v[pos + i] = 1;
    pos += static_cast<size_t>(c);
    bit ^= 1;
  }
  check_data(pos == mask.numel(), "rle_decode: counts do not cover the mask");
  return mask;
}

json scene_spec_to_json(const SceneSpec& s) {
  return json{{"image_size", s.image_size},
              {"n_buildings_range", s.n_buildings_range},
              {"footprint_range", s.footprint_range},
              {"height_range", s.height_range},
              {"rotation", s.rotation},
              {"texture_noise", s.texture_noise},
              {"seed", s.seed}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  try {
    if (j.contains("image_size")) j.at("image_size").get_to(s.image_size);
    if (j.contains("n_buildings_range")) j.at("n_buildings_range").get_to(s.n_buildings_range);
    if (j.contains("footprint_range")) j.at("footprint_range").get_to(s.footprint_range);
    if (j.contains("height_range")) j.at("height_range").get_to(s.height_range);
    if (j.contains("rotation")) j.at("rotation").get_to(s.rotation);
    if (j.contains("texture_noise")) j.at("texture_noise").get_to(s.texture_noise);
    if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

ImageTile to_image_tile(const RgbImage& img) {
  ImageTile tile;
  tile.chw = Tensor<float>({1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        tile.chw.at(0, c, y, x) =
            img.rgb[(static_cast<size_t>(y) * img.width + x) * 3 + c] / 255.0f;
  return tile;
}

RgbImage to_rgb_image(const ImageTile& tile) {
  RgbImage img;
  img.height = tile.height();
  img.width = tile.width();
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = tile.chw.at(0, c, y, x);
        v = std::min(std::max(v, 0.0f), 1.0f);
        img.rgb[(static_cast<size_t>(y) * img.width + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

void save_sample(const std::string& dir, const SyntheticSample& sample) {
  write_png_rgb8(dir + "/image.png", to_rgb_image(sample.image));
  write_grid(dir + "/height.grid", sample.height.meters);
  json instances = json::array();
  for (const auto& inst : sample.instances.items) {
    instances.push_back(
        {{"box", {inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2}},
         {"rle_mask",
          {{"size", {inst.mask.dim(0), inst.mask.dim(1)}}, {"counts", rle_encode(inst.mask)}}},
         {"height_m", inst.height_m}});
  }
  std::ofstream out(dir + "/instances.json");
  check_data(out.good(), "save_sample: cannot open " + dir + "/instances.json");
  out << instances.dump(2) << "\n";
  check_data(out.good(), "save_sample: write failure in " + dir);
}

SyntheticSample load_sample(const std::string& dir, float h_max) {
  SyntheticSample sample;
  sample.image = to_image_tile(read_png_rgb8(dir + "/image.png"));
  sample.height.meters = read_grid(dir + "/height.grid");
  sample.height.h_max = h_max;
  std::ifstream in(dir + "/instances.json");
  check_data(in.good(), "load_sample: cannot open " + dir + "/instances.json");
  json instances;
  try {
    in >> instances;
    sample.instances.width = sample.image.width();
    sample.instances.height = sample.image.height();
    for (const auto& j : instances) {
      Instance inst;
      auto box = j.at("box");
      inst.box = {box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
                  box.at(3).get<double>()};
      inst.height_m = j.at("height_m").get<float>();
      auto rle = j.at("rle_mask");
      auto size = rle.at("size");
      inst.mask = rle_decode(rle.at("counts").get<std::vector<int>>(), size.at(0).get<int>(),
                             size.at(1).get<int>());
      sample.instances.items.push_back(std::move(inst));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Data, "load_sample: malformed instances.json in " + dir + ": " + e.what());
  }
  return sample;
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

void write_manifest(const std::string& dir, const DatasetManifest& manifest) {
  json j{{"spec", scene_spec_to_json(manifest.spec)},
         {"n", manifest.n},
         {"train", manifest.train_ids},
         {"val", manifest.val_ids}};
  std::ofstream out(dir + "/manifest.json");
  check_data(out.good(), "write_manifest: cannot open " + dir + "/manifest.json");
  out << j.dump(2) << "\n";
  check_data(out.good(), "write_manifest: write failure in " + dir);
}

DatasetManifest read_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  check_data(in.good(), "read_manifest: no manifest.json under " + dir);
  json j;
  DatasetManifest m;
  try {
    in >> j;
    m.spec = scene_spec_from_json(j.at("spec"));
    m.n = j.at("n").get<int>();
    m.train_ids = j.at("train").get<std::vector<std::string>>();
    m.val_ids = j.at("val").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Data, "read_manifest: malformed manifest in " + dir + ": " + e.what());
  }
  return m;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), "file_hash: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    if (!in) break;
  }
  return h;
}

Dataset Dataset::load(const std::string& dir, const std::string& split) {
  Dataset ds;
  ds.root = dir;
  ds.manifest = read_manifest(dir);
  if (split == "train")
    ds.ids = ds.manifest.train_ids;
  else if (split == "val")
    ds.ids = ds.manifest.val_ids;
  else if (split == "all") {
    ds.ids = ds.manifest.train_ids;
    ds.ids.insert(ds.ids.end(), ds.manifest.val_ids.begin(), ds.manifest.val_ids.end());
  } else {
    throw Error(ErrorKind::Data, "dataset: unknown split '" + split + "'");
  }
  float h_max = static_cast<float>(ds.manifest.spec.height_range[1]);
  for (const auto& id : ds.ids) ds.samples.push_back(load_sample(dir + "/" + id, h_max));
  return ds;
}

}  // namespace light
