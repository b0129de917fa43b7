#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sailab/common.hpp"

namespace sailab {

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. Data length always equals the product of the
// extents; primitives reject non-finite outputs so NaN/Inf never travels
// silently through a model.
template <class S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> shp, std::vector<S> d) : shape(std::move(shp)), data(std::move(d)) {
    check_extents();
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
  }

  static Tensor zeros(std::vector<int64_t> shp) {
    Tensor t;
    t.shape = std::move(shp);
    t.check_extents();
    t.data.assign(static_cast<size_t>(shape_numel(t.shape)), S(0));
    return t;
  }

  static Tensor full(std::vector<int64_t> shp, S v) {
    Tensor t = zeros(std::move(shp));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }

  std::span<S> flat() { return {data.data(), data.size()}; }
  std::span<const S> flat() const { return {data.data(), data.size()}; }

 private:
  void check_extents() const {
    if (shape.empty()) throw std::invalid_argument("tensor shape must be nonempty");
    for (int64_t e : shape) {
      if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
    }
  }
};

template <class S>
inline void ensure_finite(std::span<const S> values, const char* producer) {
  for (S v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericalError(std::string("non-finite value produced by ") + producer);
    }
  }
}

}  // namespace sailab
