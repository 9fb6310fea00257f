#include <cstring>
#include <fstream>

#include "light/engine.hpp"

namespace light {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& in) {
  uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  write_u32(out, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(out, static_cast<uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}
Tensor<float> read_tensor(std::istream& in) {
  uint32_t ndim = read_u32(in);
  std::vector<int> shape(ndim);
  for (auto& d : shape) d = static_cast<int>(read_u32(in));
  Tensor<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  return t;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  check_data(out.good(), "checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_string(out, config.dump());
  write_string(out, metrics.dump());
  write_u32(out, static_cast<uint32_t>(epoch));
  write_u64(out, params.size());
  for (auto& [name, t] : params) {
    write_string(out, name);
    write_tensor(out, t);
  }
  write_u32(out, velocity.empty() ? 0u : 1u);
  for (auto& t : velocity) write_tensor(out, t);
  write_u64(out, buffers.size());
  for (auto& [name, t] : buffers) {
    write_string(out, name);
    write_tensor(out, t);
  }
  check_data(out.good(), "checkpoint: write failure for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), "checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  check_data(in.good() && std::memcmp(magic, kMagic, 4) == 0,
             "checkpoint: bad magic in " + path);
  uint32_t version = read_u32(in);
  check_data(version == kVersion, "checkpoint: unsupported version in " + path);
  Checkpoint ckpt;
  try {
    ckpt.config = nlohmann::json::parse(read_string(in));
    ckpt.metrics = nlohmann::json::parse(read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, "checkpoint: corrupt metadata in " + path + ": " + e.what());
  }
  ckpt.epoch = static_cast<int>(read_u32(in));
  uint64_t n = read_u64(in);
  for (uint64_t i = 0; i < n; ++i) {
    auto name = read_string(in);
    ckpt.params.emplace_back(name, read_tensor(in));
  }
  if (read_u32(in) != 0)
    for (uint64_t i = 0; i < n; ++i) ckpt.velocity.push_back(read_tensor(in));
  uint64_t nb = read_u64(in);
  for (uint64_t i = 0; i < nb; ++i) {
    auto name = read_string(in);
    ckpt.buffers.emplace_back(name, read_tensor(in));
  }
  check_data(in.good(), "checkpoint: truncated file " + path);
  return ckpt;
}

}  // namespace light
