#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace argb {

/// Dense float32 tensor with value semantics. Layout is row-major over the
/// shape; image data uses (N, C, H, W) with W contiguous.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0f);
  }
  Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
    v.assign(numel_of(shape), fill);
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return v.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int size(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  // rank-4 (N,C,H,W) accessors
  int n() const { assert(rank() == 4); return shape[0]; }
  int c() const { assert(rank() == 4); return shape[1]; }
  int h() const { assert(rank() == 4); return shape[2]; }
  int w() const { assert(rank() == 4); return shape[3]; }

  float& at(int in, int ic, int iy, int ix) {
    return v[idx(in, ic, iy, ix)];
  }
  float at(int in, int ic, int iy, int ix) const {
    return v[idx(in, ic, iy, ix)];
  }
  size_t idx(int in, int ic, int iy, int ix) const {
    assert(rank() == 4);
    return ((static_cast<size_t>(in) * shape[1] + ic) * shape[2] + iy) * shape[3] + ix;
  }

  // rank-2 accessors
  float& at2(int i, int j) { assert(rank() == 2); return v[static_cast<size_t>(i) * shape[1] + j]; }
  float at2(int i, int j) const { assert(rank() == 2); return v[static_cast<size_t>(i) * shape[1] + j]; }

  bool finite() const;
  std::string shape_str() const;
};

inline bool Tensor::finite() const {
  for (float x : v)
    if (!(x == x) || x > 3.4e38f || x < -3.4e38f) return false;
  return true;
}

inline std::string Tensor::shape_str() const {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace argb
