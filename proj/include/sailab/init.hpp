#pragma once

#include <cmath>

#include "sailab/rng.hpp"
#include "sailab/tensor.hpp"

namespace sailab {

// Weight initialization schemes. Fan counts follow the [out, in] weight
// convention: fan_in = last extent, fan_out = first extent; 1-D tensors
// use their single extent for both.
struct InitScheme {
  enum class Kind { constant, uniform, normal, xavier_uniform, kaiming_normal };

  Kind kind = Kind::constant;
  double a = 0.0;  // constant value, uniform lower bound, or normal std
  double b = 0.0;  // uniform upper bound

  static InitScheme Constant(double c) { return {Kind::constant, c, c}; }
  static InitScheme Uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  static InitScheme Normal(double std_dev) { return {Kind::normal, std_dev, 0}; }
  static InitScheme XavierUniform() { return {Kind::xavier_uniform, 0, 0}; }
  static InitScheme KaimingNormal() { return {Kind::kaiming_normal, 0, 0}; }
};

inline void fan_in_out(const std::vector<int64_t>& shape, double& fan_in, double& fan_out) {
  if (shape.size() == 1) {
    fan_in = fan_out = static_cast<double>(shape[0]);
  } else {
    fan_in = static_cast<double>(shape.back());
    fan_out = static_cast<double>(shape.front());
  }
}

template <class S>
Tensor<S> init_tensor(std::vector<int64_t> shape, const InitScheme& scheme, SeededRng& rng) {
  auto t = Tensor<S>::zeros(std::move(shape));
  double fan_in = 1, fan_out = 1;
  fan_in_out(t.shape, fan_in, fan_out);
  switch (scheme.kind) {
    case InitScheme::Kind::constant:
      for (auto& v : t.data) v = static_cast<S>(scheme.a);
      break;
    case InitScheme::Kind::uniform:
      for (auto& v : t.data) v = static_cast<S>(rng.uniform(scheme.a, scheme.b));
      break;
    case InitScheme::Kind::normal:
      for (auto& v : t.data) v = static_cast<S>(scheme.a * rng.normal());
      break;
    case InitScheme::Kind::xavier_uniform: {
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
      break;
    }
    case InitScheme::Kind::kaiming_normal: {
      double std_dev = std::sqrt(2.0 / fan_in);
      for (auto& v : t.data) v = static_cast<S>(std_dev * rng.normal());
      break;
    }
  }
  return t;
}

}  // namespace sailab
