#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace light {

// Error categories map onto CLI exit codes: config=2, data=3, numeric=4.
enum class ErrorKind { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::Config, msg);
}
inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::Data, msg);
}
inline void check_shape(bool ok, const std::string& msg) {
  // Shape violations are programming/config errors; surfaced as config.
  if (!ok) throw Error(ErrorKind::Config, msg);
}

// FNV-1a, used for dataset hashes and seed derivation. Stable across runs.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  uint64_t buf[2] = {a, b};
  return fnv1a64(buf, sizeof(buf));
}

}  // namespace light
