#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "kmfv/errors.hpp"

namespace kmfv {

// Dense float32 NCHW tensor. Lower-rank data uses size-1 leading dims.
struct Tensor {
  std::array<int, 4> d{1, 1, 1, 1}; // n, c, h, w
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : d{n, c, h, w},
        v(static_cast<std::size_t>(n) * c * h * w, 0.0f) {}

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }
  static Tensor full(int n, int c, int h, int w, float value) {
    Tensor t(n, c, h, w);
    for (auto& x : t.v) x = value;
    return t;
  }

  int n() const { return d[0]; }
  int c() const { return d[1]; }
  int h() const { return d[2]; }
  int w() const { return d[3]; }
  std::size_t size() const { return v.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(d[2]) * d[3]; }

  float& at(int n, int c, int h, int w) {
    return v[((static_cast<std::size_t>(n) * d[1] + c) * d[2] + h) * d[3] + w];
  }
  float at(int n, int c, int h, int w) const {
    return v[((static_cast<std::size_t>(n) * d[1] + c) * d[2] + h) * d[3] + w];
  }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  bool same_shape(const Tensor& o) const { return d == o.d; }

  std::string shape_str() const {
    return "[" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," +
           std::to_string(d[2]) + "," + std::to_string(d[3]) + "]";
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* where) {
  if (!a.same_shape(b)) {
    throw InternalError(std::string(where) + ": shape mismatch " +
                        a.shape_str() + " vs " + b.shape_str());
  }
}

} // namespace kmfv
