#pragma once

#include <cmath>
#include <functional>

#include "sailab/tensor.hpp"

namespace sailab {

// Central-difference gradient check. `f` evaluates the scalar objective at
// the current value of `theta`; `analytic` holds the gradient produced by
// backward(). Per-coordinate error is |fd - ad| / max(|fd|, |ad|, scale_floor),
// so coordinates whose gradient is far below scale_floor are judged on the
// absolute difference instead of an ill-conditioned ratio. Returns the max
// over checked coordinates; a constant objective yields exactly 0.
struct FdOptions {
  double scale_floor = 1e-4;
  int64_t max_coords = -1;  // -1: check every coordinate
  uint64_t stride_seed = 1;  // deterministic coordinate subsampling
};

template <class S, class F>
double finite_difference_check(F&& f, Tensor<S>& theta, const Tensor<S>& analytic, double h,
                               const FdOptions& opt = {}) {
  if (h <= 0) throw std::invalid_argument("finite_difference_check: h must be positive");
  if (analytic.shape != theta.shape) {
    throw std::invalid_argument("finite_difference_check: gradient shape mismatch");
  }
  int64_t n = theta.numel();
  int64_t step = 1;
  if (opt.max_coords > 0 && n > opt.max_coords) {
    step = n / opt.max_coords;
    if (step < 1) step = 1;
  }
  double max_err = 0.0;
  int64_t offset = static_cast<int64_t>(opt.stride_seed % static_cast<uint64_t>(step));
  for (int64_t j = offset; j < n; j += step) {
    S saved = theta.data[j];
    theta.data[j] = static_cast<S>(static_cast<double>(saved) + h);
    double fp = f();
    theta.data[j] = static_cast<S>(static_cast<double>(saved) - h);
    double fm = f();
    theta.data[j] = saved;
    double fd = (fp - fm) / (2.0 * h);
    double ad = static_cast<double>(analytic.data[j]);
    double denom = std::max({std::abs(fd), std::abs(ad), opt.scale_floor});
    max_err = std::max(max_err, std::abs(fd - ad) / denom);
  }
  return max_err;
}

}  // namespace sailab
