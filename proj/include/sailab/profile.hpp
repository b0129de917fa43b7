#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sailab/optim.hpp"

namespace sailab {

// Architecture description sufficient for closed-form optimizer-state
// memory accounting. Derivable from a real model or loaded from a preset.
struct ArchSpec {
  std::string name;
  int64_t total_params = 0;        // d
  int64_t emb_head_params = 0;     // elements of embedding + head tensors
  int64_t default_blocks = 0;      // B under the default partition
  int64_t nonemb_mini_blocks = 0;  // mini-partition blocks with shared scalar v
  int bytes_per_scalar = 4;
  std::string source;

  void validate() const {
    if (total_params < 0 || emb_head_params < 0 || default_blocks < 0 || nonemb_mini_blocks < 0) {
      throw ConfigError("arch spec: counts must be non-negative");
    }
    if (emb_head_params > total_params) throw ConfigError("arch spec: emb_head_params > total_params");
    if (bytes_per_scalar != 4 && bytes_per_scalar != 8) {
      throw ConfigError("arch spec: bytes_per_scalar must be 4 or 8");
    }
  }
};

struct MemEstimate {
  OptKind optimizer;
  uint64_t bytes = 0;
  double gibibytes = 0;  // bytes / 2^30
};

// Closed-form state sizes:
//   sgdm d*b, adam/adamw 2d*b, prodigy 4d*b,
//   adam-mini (d + d_emb + B_nonemb)*b, sgd-sai (d + B)*b.
MemEstimate estimate_state_memory(const ArchSpec& arch, OptKind optimizer);

const std::vector<ArchSpec>& builtin_arch_presets();
const ArchSpec* find_arch_preset(const std::string& name);
ArchSpec arch_spec_from_json_text(const std::string& text);

template <class S>
ArchSpec arch_spec_from_model(const Model<S>& model, std::string name = "model") {
  ArchSpec a;
  a.name = std::move(name);
  a.bytes_per_scalar = static_cast<int>(sizeof(S));
  for (const auto& b : model.blocks()) {
    a.total_params += b.numel();
    if (b.kind == BlockKind::embedding || b.kind == BlockKind::head) a.emb_head_params += b.numel();
  }
  a.default_blocks = default_partition(model).block_count();
  for (const auto& ref : mini_partition(model).blocks) {
    if (!ref.elementwise_v) ++a.nonemb_mini_blocks;
  }
  a.source = "derived from constructed model";
  return a;
}

// Wall time of the bare optimizer step, mean +- std over n_iters trials
// after n_warmup discarded; the same pre-populated gradient buffers are
// reused for every trial.
struct StepTiming {
  double mean_ms = 0;
  double std_ms = 0;
  int trials = 0;
  int warmup = 0;
};

template <class S>
StepTiming time_optimizer_step(std::vector<ParamBlock<S>>& blocks, Optimizer<S>& opt, int n_iters,
                               int n_warmup = 5) {
  if (n_iters < 20) throw std::invalid_argument("time_optimizer_step: need at least 20 trials");
  using clock = std::chrono::steady_clock;
  if (opt.needs_first_batch_init()) opt.init_from_first_gradients(blocks);
  std::vector<double> ms;
  ms.reserve(static_cast<size_t>(n_iters));
  for (int i = 0; i < n_warmup + n_iters; ++i) {
    auto t0 = clock::now();
    opt.step(blocks);
    auto t1 = clock::now();
    if (i >= n_warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  StepTiming out;
  out.trials = n_iters;
  out.warmup = n_warmup;
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(ms.size());
  double var = 0;
  for (double v : ms) var += (v - mean) * (v - mean);
  var /= static_cast<double>(ms.size());
  out.mean_ms = mean;
  out.std_ms = std::sqrt(var);
  return out;
}

// One-shot duration of the frozen-scale computation (gradients must already
// be populated).
template <class S>
double time_gsnr_calc_ms(const std::vector<ParamBlock<S>>& blocks, const PartitionSpec& partition,
                         double eps = kDefaultGsnrEps) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  volatile double sink = compute_scales(blocks, partition, eps).scales[0];
  (void)sink;
  auto t1 = clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace sailab
