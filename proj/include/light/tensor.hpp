#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "light/common.hpp"
#include "light/rng.hpp"

namespace light {

// Dense row-major tensor. Feature maps are NCHW.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), T(0));
  }
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)) {
    v.assign(numel_of(shape), fill);
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }

  // NCHW accessors.
  T& at(int n, int c, int h, int w) {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T& at(int n, int c) { return v[static_cast<size_t>(n) * shape[1] + c]; }
  const T& at(int n, int c) const { return v[static_cast<size_t>(n) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T x) { return Tensor(std::move(s), x); }
  static Tensor scalar(T x) { return Tensor({1}, x); }

  static Tensor randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }
  static Tensor rand_uniform(std::vector<int> s, Rng& rng, T lo, T hi) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> o;
    o.shape = shape;
    o.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) o.v[i] = static_cast<U>(v[i]);
    return o;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
  }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  check_shape(a.shape == b.shape, std::string(where) + ": shape mismatch " +
                                      a.shape_str() + " vs " + b.shape_str());
}

}  // namespace light
