#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace sailab {

// Counter-based generator: draw k is a pure hash of (seed, k), so streams
// survive refactorings that change how many values are pulled where.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : seed_(seed), counter_(0) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes exactly two counter values per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // Derives an independent stream; used to split model/data/eval streams
  // off one experiment seed.
  SeededRng split(uint64_t stream) const {
    SeededRng r(seed_ ^ (0xD1B54A32D192ED03ull * (stream + 1)));
    return r;
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

enum class Dist { uniform01, normal01 };

inline std::vector<double> draw(SeededRng& rng, int64_t n, Dist dist) {
  if (n < 1) throw std::invalid_argument("draw: n must be >= 1");
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = dist == Dist::uniform01 ? rng.uniform() : rng.normal();
  return out;
}

}  // namespace sailab
