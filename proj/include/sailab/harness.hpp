#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sailab/gsnr.hpp"
#include "sailab/optim.hpp"
#include "sailab/profile.hpp"

namespace sailab {

enum class LrSchedule { constant, cosine };

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  MlpSpec mlp;
  TinyTransformerSpec transformer;
};

struct TrainConfig {
  ModelConfig model;
  DatasetSpec dataset;
  OptKind optimizer = OptKind::sgdm;
  Hyper hyper;
  int64_t steps = 100;
  int64_t batch_size = 32;
  uint64_t seed = 42;
  int64_t trace_stride = 0;  // 0: no g-SNR trace
  Precision precision = Precision::f64;
  LrSchedule schedule = LrSchedule::constant;
  double gsnr_eps = kDefaultGsnrEps;
  int64_t gsnr_average_batches = 1;  // >1: average stats over the first k batches
  int64_t eval_size = 256;

  void validate() const;
};

struct GridSpec {
  TrainConfig base;
  std::vector<double> lr_candidates = {0.1, 0.01, 0.001, 0.0001};
  std::vector<double> wd_candidates = {0.01, 0.001, 0.0001};
  std::vector<uint64_t> seeds = {1, 2, 3};
  // Prodigy ignores lr/wd tuning by design; by default it runs one cell per
  // seed at its own defaults instead of the full sweep.
  bool include_prodigy_full_grid = false;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);
GridSpec grid_spec_from_json(const nlohmann::json& j);

// FNV-1a over the canonical config JSON with the seed field removed; seeds
// change data and initialization, not the configuration identity.
std::string config_hash(const TrainConfig& c);

struct RunRecord {
  std::string run_id;
  TrainConfig config;
  std::string hash;
  std::vector<double> losses;
  std::vector<double> batch_metrics;
  double final_metric = 0;
  bool diverged = false;
  int64_t steps_completed = 0;
  GsnrTrace trace;
  bool has_trace = false;
  std::vector<StepReport> step_reports;
  double wall_seconds = 0;  // never written to canonical outputs
};

RunRecord run_training(const TrainConfig& config);

struct CellResult {
  std::string optimizer;
  double lr = 0;
  double wd = 0;
  uint64_t seed = 0;
  double final_metric = 0;
  bool diverged = false;
};

struct OptimizerSummary {
  std::string optimizer;
  double peak_mean = 0, peak_std = 0;  // best (lr, wd) cell, stats over seeds
  double peak_lr = 0, peak_wd = 0;
  double avg_mean = 0, avg_std = 0;  // all cells and seeds
  bool avg_defined = true;           // false for prodigy outside the sweep
  int64_t runs = 0;
};

struct GridResult {
  std::vector<CellResult> cells;
  std::vector<OptimizerSummary> summary;
};

// Runs |lr| x |wd| x |seeds| cells per optimizer on a bounded worker pool
// (SAI_LAB_THREADS caps it). Diverged runs keep their 0-accuracy metric and
// stay in the averages.
GridResult run_grid(const GridSpec& grid, const std::vector<OptKind>& optimizers);

// Reference aggregation used by tests; recomputes summaries from raw cells.
std::vector<OptimizerSummary> summarize_cells(const std::vector<CellResult>& cells,
                                              const std::vector<std::string>& optimizer_order);

int worker_pool_size(int64_t n_tasks);

}  // namespace sailab
