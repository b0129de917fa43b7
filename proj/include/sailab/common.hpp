#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sailab {

enum class Precision { f32, f64 };

inline int bytes_per_scalar(Precision p) { return p == Precision::f32 ? 4 : 8; }

// Raised when a primitive or optimizer produces a non-finite value.
// The harness treats this as divergence; everything else is a hard error.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Canonical float formatting: shortest round-trip form, used by every
// CSV/JSON emitter so that parse -> re-emit is byte identical.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace sailab
