#include "sailab/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <numbers>
#include <thread>

namespace sailab {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("config: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (trace_stride < 0) throw ConfigError("config: trace_stride must be >= 0");
  if (gsnr_average_batches < 1) throw ConfigError("config: gsnr_average_batches must be >= 1");
  if (eval_size < 1) throw ConfigError("config: eval_size must be >= 1");
  try {
    hyper.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation: '" + s + "'");
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::copy_task: return "copy_task";
  }
  return "?";
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    const auto& jm = j.at("model");
    std::string type = jm.at("type").get<std::string>();
    if (type == "mlp") {
      c.model.kind = ModelKind::mlp;
      c.model.mlp.input_dim = jm.at("input_dim").get<int64_t>();
      c.model.mlp.hidden_dims = jm.value("hidden_dims", std::vector<int64_t>{});
      c.model.mlp.output_dim = jm.at("output_dim").get<int64_t>();
      c.model.mlp.activation = parse_activation(jm.value("activation", "relu"));
    } else if (type == "tiny_transformer") {
      c.model.kind = ModelKind::tiny_transformer;
      auto& t = c.model.transformer;
      t.vocab_size = jm.at("vocab_size").get<int64_t>();
      t.context_length = jm.at("context_length").get<int64_t>();
      t.d_model = jm.at("d_model").get<int64_t>();
      t.n_heads = jm.at("n_heads").get<int64_t>();
      t.n_layers = jm.at("n_layers").get<int64_t>();
      t.mlp_ratio = jm.value("mlp_ratio", int64_t{4});
    } else {
      throw ConfigError("unknown model type: '" + type + "'");
    }
    const auto& jd = j.at("dataset");
    c.dataset.kind = parse_dataset_kind(jd.at("kind").get<std::string>());
    c.dataset.size = jd.value("size", int64_t{256});
    c.dataset.noise = jd.value("noise", 0.1);
    c.dataset.center = jd.value("center", 5.0);
    if (c.model.kind == ModelKind::tiny_transformer) {
      c.dataset.vocab = jd.value("vocab", c.model.transformer.vocab_size);
      c.dataset.length = jd.value("length", c.model.transformer.context_length);
    } else {
      c.dataset.vocab = jd.value("vocab", int64_t{8});
      c.dataset.length = jd.value("length", int64_t{16});
    }
    c.optimizer = parse_opt_kind(j.at("optimizer").get<std::string>());
    if (j.contains("hyper")) {
      const auto& jh = j.at("hyper");
      c.hyper.lr = jh.value("lr", c.hyper.lr);
      c.hyper.weight_decay = jh.value("weight_decay", c.hyper.weight_decay);
      c.hyper.momentum = jh.value("momentum", c.hyper.momentum);
      c.hyper.dampening = jh.value("dampening", c.hyper.dampening);
      c.hyper.beta1 = jh.value("beta1", c.hyper.beta1);
      c.hyper.beta2 = jh.value("beta2", c.hyper.beta2);
      c.hyper.eps = jh.value("eps", c.hyper.eps);
      c.hyper.d0 = jh.value("d0", c.hyper.d0);
      c.hyper.maximize = jh.value("maximize", false);
    }
    c.steps = j.value("steps", int64_t{100});
    c.batch_size = j.value("batch_size", int64_t{32});
    c.seed = j.value("seed", uint64_t{42});
    c.trace_stride = j.value("trace_stride", int64_t{0});
    std::string prec = j.value("precision", "f64");
    if (prec == "f32") {
      c.precision = Precision::f32;
    } else if (prec == "f64") {
      c.precision = Precision::f64;
    } else {
      throw ConfigError("precision must be f32 or f64");
    }
    std::string sched = j.value("schedule", "constant");
    if (sched == "constant") {
      c.schedule = LrSchedule::constant;
    } else if (sched == "cosine") {
      c.schedule = LrSchedule::cosine;
    } else {
      throw ConfigError("schedule must be constant or cosine");
    }
    c.gsnr_eps = j.value("gsnr_eps", kDefaultGsnrEps);
    c.gsnr_average_batches = j.value("gsnr_average_batches", int64_t{1});
    c.eval_size = j.value("eval_size", int64_t{256});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json jm;
  if (c.model.kind == ModelKind::mlp) {
    jm = {{"type", "mlp"},
          {"input_dim", c.model.mlp.input_dim},
          {"hidden_dims", c.model.mlp.hidden_dims},
          {"output_dim", c.model.mlp.output_dim},
          {"activation", activation_name(c.model.mlp.activation)}};
  } else {
    const auto& t = c.model.transformer;
    jm = {{"type", "tiny_transformer"}, {"vocab_size", t.vocab_size},
          {"context_length", t.context_length}, {"d_model", t.d_model},
          {"n_heads", t.n_heads}, {"n_layers", t.n_layers}, {"mlp_ratio", t.mlp_ratio}};
  }
  nlohmann::json jd = {{"kind", dataset_kind_name(c.dataset.kind)}, {"size", c.dataset.size},
                       {"noise", c.dataset.noise}, {"center", c.dataset.center},
                       {"vocab", c.dataset.vocab}, {"length", c.dataset.length}};
  nlohmann::json jh = {{"lr", c.hyper.lr}, {"weight_decay", c.hyper.weight_decay},
                       {"momentum", c.hyper.momentum}, {"dampening", c.hyper.dampening},
                       {"beta1", c.hyper.beta1}, {"beta2", c.hyper.beta2},
                       {"eps", c.hyper.eps}, {"d0", c.hyper.d0}, {"maximize", c.hyper.maximize}};
  return nlohmann::json{{"model", jm},
                        {"dataset", jd},
                        {"optimizer", opt_kind_name(c.optimizer)},
                        {"hyper", jh},
                        {"steps", c.steps},
                        {"batch_size", c.batch_size},
                        {"seed", c.seed},
                        {"trace_stride", c.trace_stride},
                        {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
                        {"schedule", c.schedule == LrSchedule::cosine ? "cosine" : "constant"},
                        {"gsnr_eps", c.gsnr_eps},
                        {"gsnr_average_batches", c.gsnr_average_batches},
                        {"eval_size", c.eval_size}};
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec g;
  try {
    g.base = train_config_from_json(j.at("base"));
    if (j.contains("lr")) g.lr_candidates = j.at("lr").get<std::vector<double>>();
    if (j.contains("wd")) g.wd_candidates = j.at("wd").get<std::vector<double>>();
    if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    g.include_prodigy_full_grid = j.value("include_prodigy_full_grid", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
  if (g.lr_candidates.empty() || g.wd_candidates.empty() || g.seeds.empty()) {
    throw ConfigError("grid config: candidate lists must be nonempty");
  }
  return g;
}

std::string config_hash(const TrainConfig& c) {
  nlohmann::json j = train_config_to_json(c);
  j.erase("seed");
  std::string text = j.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

template <class S>
Model<S> build_model(const ModelConfig& mc, SeededRng& rng) {
  return mc.kind == ModelKind::mlp ? build_mlp<S>(mc.mlp, rng)
                                   : build_tiny_transformer<S>(mc.transformer, rng);
}

double schedule_lr(const TrainConfig& c, int64_t step) {
  if (c.schedule == LrSchedule::constant) return c.hyper.lr;
  double frac = static_cast<double>(step - 1) / static_cast<double>(c.steps);
  return c.hyper.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

// Optional guard against a pathological first batch: stats averaged over
// the first k batches (extra forward passes, no parameter motion), then the
// frozen table is installed before momentum seeding.
template <class S>
void averaged_sai_init(Model<S>& model, SaiOptimizer<S>& sai, const TrainConfig& cfg,
                       const Dataset<S>& data) {
  std::vector<GsnrStats> acc;
  const auto& partition = sai.partition();
  for (int64_t k = 0; k < cfg.gsnr_average_batches; ++k) {
    Batch<S> b = take_batch(data, k, cfg.batch_size);
    model.forward_loss(b, true);
    auto stats = partition_stats(model.blocks(), partition, cfg.gsnr_eps);
    if (acc.empty()) {
      acc = std::move(stats);
    } else {
      for (size_t i = 0; i < acc.size(); ++i) {
        acc[i].g_norm += stats[i].g_norm;
        acc[i].g_var += stats[i].g_var;
      }
    }
  }
  double inv = 1.0 / static_cast<double>(cfg.gsnr_average_batches);
  for (auto& s : acc) {
    s.g_norm *= inv;
    s.g_var *= inv;
    s.g_snr = s.g_norm == 0.0 ? 0.0 : s.g_norm / (std::sqrt(s.g_var) + cfg.gsnr_eps);
  }
  ScaleTable table = normalize(acc, cfg.gsnr_eps);
  table.frozen_at_step = cfg.gsnr_average_batches;
  // restore the first batch's gradients, then seed momentum + scales
  Batch<S> first = take_batch(data, 0, cfg.batch_size);
  model.forward_loss(first, true);
  sai.init_from_first_gradients(model.blocks());
  sai.override_scales(table.scales);
}

template <class S>
RunRecord run_training_impl(const TrainConfig& cfg) {
  auto t_start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  rec.hash = config_hash(cfg);

  SeededRng root(cfg.seed);
  SeededRng model_rng = root.split(0);
  Dataset<S> train_data = synth_dataset<S>(cfg.dataset, root.split(1).seed());
  Model<S> model = build_model<S>(cfg.model, model_rng);
  auto opt = make_optimizer<S>(cfg.optimizer, model, cfg.hyper, cfg.gsnr_eps);

  PartitionSpec trace_partition;
  if (cfg.trace_stride > 0) {
    trace_partition = default_partition(model);
    rec.trace.stride = cfg.trace_stride;
    rec.has_trace = true;
  }

  bool diverged = false;
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    Batch<S> batch = take_batch(train_data, step - 1, cfg.batch_size);
    try {
      auto fw = model.forward_loss(batch, true);
      rec.losses.push_back(fw.loss);
      rec.batch_metrics.push_back(fw.batch_accuracy);
      if (step == 1 && opt->needs_first_batch_init()) {
        if (cfg.gsnr_average_batches > 1) {
          averaged_sai_init(model, static_cast<SaiOptimizer<S>&>(*opt), cfg, train_data);
        } else {
          opt->init_from_first_gradients(model.blocks());
        }
      }
      if (cfg.trace_stride > 0 && (step - 1) % cfg.trace_stride == 0) {
        record_trace(rec.trace, step, model.blocks(), trace_partition, cfg.gsnr_eps);
      }
      opt->set_lr(schedule_lr(cfg, step));
      rec.step_reports.push_back(opt->step(model.blocks()));
      rec.steps_completed = step;
    } catch (const NumericalError&) {
      diverged = true;
      break;
    }
  }
  rec.diverged = diverged;
  if (diverged) {
    rec.final_metric = 0.0;  // accuracy-style metric for a failed run
  } else {
    DatasetSpec eval_spec = cfg.dataset;
    eval_spec.size = cfg.eval_size;
    Dataset<S> eval_data = synth_dataset<S>(eval_spec, root.split(2).seed());
    try {
      rec.final_metric = model.evaluate_accuracy(eval_data);
    } catch (const NumericalError&) {
      rec.diverged = true;
      rec.final_metric = 0.0;
    }
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rec;
}

}  // namespace

RunRecord run_training(const TrainConfig& cfg) {
  cfg.validate();
  return cfg.precision == Precision::f32 ? run_training_impl<float>(cfg) : run_training_impl<double>(cfg);
}

int worker_pool_size(int64_t n_tasks) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SAI_LAB_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) hw = v;
  }
  return static_cast<int>(std::min<int64_t>(hw, std::max<int64_t>(n_tasks, 1)));
}

GridResult run_grid(const GridSpec& grid, const std::vector<OptKind>& optimizers) {
  grid.base.validate();
  struct Task {
    TrainConfig cfg;
    CellResult cell;
  };
  std::vector<Task> tasks;
  for (OptKind opt : optimizers) {
    bool restricted = opt == OptKind::prodigy && !grid.include_prodigy_full_grid;
    // restricted prodigy runs once per seed at its own defaults (lr 1 with
    // cosine annealing, base weight decay)
    std::vector<double> lrs = restricted ? std::vector<double>{1.0} : grid.lr_candidates;
    std::vector<double> wds = restricted ? std::vector<double>{grid.base.hyper.weight_decay}
                                         : grid.wd_candidates;
    for (double lr : lrs) {
      for (double wd : wds) {
        for (uint64_t seed : grid.seeds) {
          Task t;
          t.cfg = grid.base;
          t.cfg.optimizer = opt;
          t.cfg.hyper.lr = lr;
          t.cfg.hyper.weight_decay = wd;
          t.cfg.seed = seed;
          t.cfg.trace_stride = 0;
          if (opt == OptKind::prodigy) t.cfg.schedule = LrSchedule::cosine;
          t.cell = {opt_kind_name(opt), lr, wd, seed, 0.0, false};
          tasks.push_back(std::move(t));
        }
      }
    }
  }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      RunRecord rec = run_training(tasks[i].cfg);
      tasks[i].cell.final_metric = rec.final_metric;
      tasks[i].cell.diverged = rec.diverged;
    }
  };
  int n_workers = worker_pool_size(static_cast<int64_t>(tasks.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  GridResult out;
  out.cells.reserve(tasks.size());
  for (auto& t : tasks) out.cells.push_back(t.cell);
  std::vector<std::string> order;
  for (OptKind opt : optimizers) order.emplace_back(opt_kind_name(opt));
  out.summary = summarize_cells(out.cells, order);
  for (auto& s : out.summary) {
    if (s.optimizer == "prodigy" && !grid.include_prodigy_full_grid) s.avg_defined = false;
  }
  return out;
}

std::vector<OptimizerSummary> summarize_cells(const std::vector<CellResult>& cells,
                                              const std::vector<std::string>& optimizer_order) {
  std::vector<OptimizerSummary> out;
  for (const auto& name : optimizer_order) {
    OptimizerSummary s;
    s.optimizer = name;
    struct CellKey {
      double lr, wd;
    };
    std::vector<CellKey> keys;
    std::vector<std::vector<double>> per_cell;
    std::vector<double> all;
    for (const auto& c : cells) {
      if (c.optimizer != name) continue;
      all.push_back(c.final_metric);
      size_t k = 0;
      for (; k < keys.size(); ++k) {
        if (keys[k].lr == c.lr && keys[k].wd == c.wd) break;
      }
      if (k == keys.size()) {
        keys.push_back({c.lr, c.wd});
        per_cell.emplace_back();
      }
      per_cell[k].push_back(c.final_metric);
    }
    if (all.empty()) continue;
    auto mean_std = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - m) * (x - m);
      var /= static_cast<double>(v.size());
      return std::pair<double, double>(m, std::sqrt(var));
    };
    size_t best = 0;
    double best_mean = -1;
    for (size_t k = 0; k < per_cell.size(); ++k) {
      auto [m, sd] = mean_std(per_cell[k]);
      if (m > best_mean) {
        best_mean = m;
        best = k;
      }
    }
    auto [pm, ps] = mean_std(per_cell[best]);
    auto [am, as] = mean_std(all);
    s.peak_mean = pm;
    s.peak_std = ps;
    s.peak_lr = keys[best].lr;
    s.peak_wd = keys[best].wd;
    s.avg_mean = am;
    s.avg_std = as;
    s.runs = static_cast<int64_t>(all.size());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sailab
