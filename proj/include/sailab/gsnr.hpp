#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sailab/blocks.hpp"
#include "sailab/common.hpp"

namespace sailab {

constexpr double kDefaultGsnrEps = 1e-8;

// Per-block gradient statistics: l2 norm, population variance of the
// entries (divisor d_i), and their ratio
//   G_snr = G_norm / (sqrt(G_var) + eps).
// An all-zero gradient yields G_snr = 0; a constant nonzero gradient has
// zero variance, so G_snr = G_norm / eps.
struct GsnrStats {
  std::string block_name;
  double g_norm = 0;
  double g_var = 0;
  double g_snr = 0;
};

// Normalized scales G~ = G_snr / max_k G_snr, all within [0,1] with the
// argmax block at exactly 1. When every block's SNR is zero the
// normalization is undefined; scales fall back to all-ones and the table
// carries a degenerate-gradient warning.
struct ScaleTable {
  std::vector<std::string> names;
  std::vector<double> scales;
  double epsilon = kDefaultGsnrEps;
  int64_t frozen_at_step = 1;
  bool degenerate = false;

  double scale_for(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return scales[i];
    }
    throw std::invalid_argument("no scale recorded for block '" + name + "'");
  }
};

// Welford accumulation in 64-bit regardless of model precision.
template <class S>
GsnrStats block_stats(std::span<const S> g, double eps, std::string name = {}) {
  if (g.empty()) throw std::invalid_argument("block_stats: empty block");
  if (eps <= 0) throw std::invalid_argument("block_stats: eps must be positive");
  double sumsq = 0, mean = 0, m2 = 0;
  int64_t n = 0;
  for (S sv : g) {
    double v = static_cast<double>(sv);
    sumsq += v * v;
    ++n;
    double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  GsnrStats s;
  s.block_name = std::move(name);
  s.g_norm = std::sqrt(sumsq);
  s.g_var = m2 / static_cast<double>(n);
  s.g_snr = s.g_norm == 0.0 ? 0.0 : s.g_norm / (std::sqrt(s.g_var) + eps);
  return s;
}

ScaleTable normalize(const std::vector<GsnrStats>& stats, double eps = kDefaultGsnrEps);

template <class S>
std::vector<GsnrStats> partition_stats(const std::vector<ParamBlock<S>>& blocks,
                                       const PartitionSpec& partition, double eps) {
  std::vector<GsnrStats> out;
  out.reserve(partition.blocks.size());
  for (const auto& ref : partition.blocks) {
    out.push_back(block_stats<S>(grad_view(blocks, ref), eps, ref.name));
  }
  return out;
}

// Two passes: per-block stats, then normalization by the global max.
template <class S>
ScaleTable compute_scales(const std::vector<ParamBlock<S>>& blocks, const PartitionSpec& partition,
                          double eps = kDefaultGsnrEps) {
  return normalize(partition_stats(blocks, partition, eps), eps);
}

// Time series of per-block stats sampled every `stride` steps.
struct GsnrTrace {
  int64_t stride = 1;
  std::vector<std::string> block_names;
  std::vector<int64_t> steps;
  std::vector<std::vector<GsnrStats>> samples;  // samples[t][block]

  int64_t sample_count() const { return static_cast<int64_t>(samples.size()); }
};

template <class S>
void record_trace(GsnrTrace& trace, int64_t step, const std::vector<ParamBlock<S>>& blocks,
                  const PartitionSpec& partition, double eps = kDefaultGsnrEps) {
  if (trace.block_names.empty()) {
    for (const auto& ref : partition.blocks) trace.block_names.push_back(ref.name);
  }
  trace.steps.push_back(step);
  trace.samples.push_back(partition_stats(blocks, partition, eps));
}

// Per-block temporal coefficient of variation (population std over time
// divided by the time mean) plus the cross-block spread of time-mean SNRs.
struct StabilityReport {
  std::vector<std::string> block_names;
  std::vector<double> cv;          // aligned with block_names
  std::vector<double> time_mean;   // time-mean SNR per block
  double median_cv = 0;
  double spread = 0;               // max/min over blocks with nonzero mean
};

StabilityReport stability_report(const GsnrTrace& trace);

std::string trace_to_csv(const GsnrTrace& trace);
GsnrTrace trace_from_csv(const std::string& csv);

}  // namespace sailab
