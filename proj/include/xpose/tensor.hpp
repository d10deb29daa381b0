#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "xpose/errors.hpp"

namespace xpose {

struct Shape {
  int b = 0, h = 0, w = 0, c = 0;

  int64_t count() const { return int64_t(b) * h * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "[" + std::to_string(b) + "," + std::to_string(h) + "," +
           std::to_string(w) + "," + std::to_string(c) + "]";
  }
};

// Dense 4-d float32 array, row-major [b, h, w, c]. Image batches keep values
// in [0, 1]; the same container holds layer parameters with other axis
// meanings (e.g. conv weights as [kh, kw, cin, cout]).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(size_t(s.count()), 0.0f) {}
  Tensor(Shape s, std::vector<float> values) : shape_(s), data_(std::move(values)) {
    if (int64_t(data_.size()) != s.count())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + s.str());
  }

  static Tensor full(Shape s, float v) {
    Tensor t(s);
    for (auto& x : t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  int64_t index(int n, int i, int j, int k) const {
    return ((int64_t(n) * shape_.h + i) * shape_.w + j) * shape_.c + k;
  }
  float& at(int n, int i, int j, int k) { return data_[size_t(index(n, i, j, k))]; }
  float at(int n, int i, int j, int k) const { return data_[size_t(index(n, i, j, k))]; }

  bool requires_grad = false;
  std::vector<float> grad;  // empty, or same length as data
  void alloc_grad() { grad.assign(data_.size(), 0.0f); }

 private:
  Shape shape_;
  std::vector<float> data_;
};

inline bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

inline float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.vec()) m = std::max(m, std::fabs(v));
  return m;
}

inline bool all_finite(const Tensor& t) {
  for (float v : t.vec())
    if (!std::isfinite(v)) return false;
  return true;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.vec()[i] - b.vec()[i]));
  return m;
}

}  // namespace xpose
