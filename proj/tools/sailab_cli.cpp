// sailab: optimizer laboratory command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure
// (every run in the command diverged).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "sailab/report.hpp"

namespace fs = std::filesystem;
using namespace sailab;

namespace {

struct NamedModel {
  const char* name;
  const char* description;
};

constexpr NamedModel kZoo[] = {
    {"mlp", "2-16-16-2 relu classifier"},
    {"tiny-transformer", "vocab 64, ctx 32, d_model 32, 2 heads, 2 layers"},
    {"tiny-transformer-big", "vocab 256, ctx 64, d_model 128, 4 heads, 4 layers"},
};

Model<double> build_named_model(const std::string& name, SeededRng& rng) {
  if (name == "mlp") return build_mlp<double>({2, {16, 16}, 2, Activation::relu}, rng);
  if (name == "tiny-transformer") return build_tiny_transformer<double>({64, 32, 32, 2, 2, 4}, rng);
  if (name == "tiny-transformer-big") {
    return build_tiny_transformer<double>({256, 64, 128, 4, 4, 4}, rng);
  }
  throw ConfigError("unknown model '" + name + "'; known: mlp, tiny-transformer, tiny-transformer-big");
}

nlohmann::json load_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_run_outputs(const std::vector<RunRecord>& records, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& rec : records) j.push_back(run_record_to_json(rec));
  write_text_file(out_dir / "runs.json", j.dump(2) + "\n");
  write_text_file(out_dir / "metrics.csv", metrics_csv(records));
}

int cmd_train(const fs::path& config_path, const fs::path& out_dir) {
  TrainConfig cfg = train_config_from_json(load_json_file(config_path));
  RunRecord rec = run_training(cfg);
  rec.run_id = std::string(opt_kind_name(cfg.optimizer)) + "-0000";
  write_run_outputs({rec}, out_dir);
  std::cout << "run " << rec.run_id << ": steps=" << rec.steps_completed
            << " final_metric=" << format_double(rec.final_metric)
            << (rec.diverged ? " (diverged)" : "") << "\n";
  std::cout << "wrote " << (out_dir / "runs.json").string() << ", "
            << (out_dir / "metrics.csv").string() << "\n";
  return rec.diverged ? 2 : 0;
}

int cmd_gsnr_trace(const fs::path& config_path, const fs::path& out_dir) {
  TrainConfig cfg = train_config_from_json(load_json_file(config_path));
  if (cfg.trace_stride <= 0) cfg.trace_stride = 5;
  RunRecord rec = run_training(cfg);
  rec.run_id = std::string(opt_kind_name(cfg.optimizer)) + "-0000";
  fs::create_directories(out_dir);
  write_run_outputs({rec}, out_dir);
  write_text_file(out_dir / (rec.run_id + "_gsnr_trace.csv"), trace_to_csv(rec.trace));
  if (rec.trace.sample_count() >= 10) {
    auto rep = stability_report(rec.trace);
    nlohmann::json j;
    j["median_cv"] = rep.median_cv;
    j["spread"] = rep.spread;
    nlohmann::json blocks = nlohmann::json::array();
    for (size_t i = 0; i < rep.block_names.size(); ++i) {
      blocks.push_back({{"block", rep.block_names[i]},
                        {"cv", rep.cv[i]},
                        {"time_mean_snr", rep.time_mean[i]}});
    }
    j["blocks"] = blocks;
    write_text_file(out_dir / "stability.json", j.dump(2) + "\n");
    std::cout << "median temporal CV " << format_double(rep.median_cv) << ", cross-block spread "
              << format_double(rep.spread) << "\n";
  }
  std::cout << "wrote " << (out_dir / (rec.run_id + "_gsnr_trace.csv")).string() << "\n";
  return rec.diverged ? 2 : 0;
}

int cmd_grid(const fs::path& config_path, const std::string& optimizers, const fs::path& out_dir) {
  GridSpec grid = grid_spec_from_json(load_json_file(config_path));
  std::vector<OptKind> opts;
  std::stringstream ss(optimizers);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) opts.push_back(parse_opt_kind(tok));
  }
  if (opts.empty()) throw ConfigError("grid: no optimizers given");
  GridResult res = run_grid(grid, opts);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "grid.csv", grid_csv(res.cells));
  write_text_file(out_dir / "grid_summary.json", grid_result_to_json(res).dump(2) + "\n");
  bool all_diverged = !res.cells.empty();
  for (const auto& c : res.cells) all_diverged = all_diverged && c.diverged;
  for (const auto& s : res.summary) {
    std::cout << s.optimizer << ": peak " << format_double(s.peak_mean) << " +- "
              << format_double(s.peak_std) << " (lr " << format_double(s.peak_lr) << ", wd "
              << format_double(s.peak_wd) << ")";
    if (s.avg_defined) {
      std::cout << ", avg " << format_double(s.avg_mean) << " +- " << format_double(s.avg_std);
    } else {
      std::cout << ", avg n/a";
    }
    std::cout << " over " << s.runs << " runs\n";
  }
  std::cout << "wrote " << (out_dir / "grid.csv").string() << ", "
            << (out_dir / "grid_summary.json").string() << "\n";
  return all_diverged ? 2 : 0;
}

int cmd_profile_step(const std::string& model_name, const std::string& opt_name, int iters,
                     int warmup, uint64_t seed) {
  SeededRng rng(seed);
  Model<double> model = build_named_model(model_name, rng);
  Hyper h;
  h.lr = 0.01;
  auto opt = make_optimizer<double>(parse_opt_kind(opt_name), model, h);
  // one synthetic backward pass to populate gradients, reused every trial
  DatasetSpec dspec;
  if (model.kind() == ModelKind::tiny_transformer) {
    dspec.kind = DatasetKind::copy_task;
    dspec.vocab = model.transformer_spec().vocab_size;
    dspec.length = model.transformer_spec().context_length;
  } else {
    dspec.kind = DatasetKind::blobs;
  }
  dspec.size = 8;
  auto data = synth_dataset<double>(dspec, seed);
  model.forward_loss(take_batch(data, 0, 8), true);
  auto timing = time_optimizer_step(model.blocks(), *opt, iters, warmup);
  std::cout << model_name << " x " << opt_name << ": " << format_double(timing.mean_ms) << " ms +- "
            << format_double(timing.std_ms) << " over " << timing.trials << " trials (" << timing.warmup
            << " warmup)\n";
  if (opt->kind() == OptKind::sgd_sai) {
    SeededRng rng2(seed);
    Model<double> fresh = build_named_model(model_name, rng2);
    fresh.forward_loss(take_batch(data, 0, 8), true);
    double gsnr_ms = time_gsnr_calc_ms(fresh.blocks(), default_partition(fresh));
    std::cout << "one-time g-SNR calculation: " << format_double(gsnr_ms) << " ms\n";
  }
  return 0;
}

int cmd_estimate_mem(const std::string& arch_arg, const std::string& opt_arg, const fs::path& out_dir,
                     bool write_csv) {
  ArchSpec arch;
  if (const ArchSpec* preset = find_arch_preset(arch_arg)) {
    arch = *preset;
  } else if (fs::exists(arch_arg)) {
    arch = arch_spec_from_json_text(read_text_file(arch_arg));
  } else {
    std::string names;
    for (const auto& p : builtin_arch_presets()) names += " " + p.name;
    throw ConfigError("unknown arch '" + arch_arg + "' (no such preset or file); presets:" + names);
  }
  std::vector<OptKind> kinds;
  if (opt_arg == "all") {
    kinds = {OptKind::sgdm, OptKind::adam, OptKind::adamw, OptKind::prodigy, OptKind::adam_mini,
             OptKind::sgd_sai};
  } else {
    kinds = {parse_opt_kind(opt_arg)};
  }
  std::vector<MemEstimate> ests;
  for (OptKind k : kinds) {
    auto e = estimate_state_memory(arch, k);
    std::cout << arch.name << " " << opt_kind_name(k) << ": " << e.bytes << " bytes = "
              << format_double(e.gibibytes) << " GiB\n";
    ests.push_back(e);
  }
  if (write_csv) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / "memory.csv", memory_csv({{arch, ests}}));
    std::cout << "wrote " << (out_dir / "memory.csv").string() << "\n";
  }
  return 0;
}

int cmd_report(const fs::path& in_dir, const std::string& format, const fs::path& out_dir) {
  auto runs_path = in_dir / "runs.json";
  if (!fs::exists(runs_path)) throw ConfigError("no runs.json under " + in_dir.string());
  nlohmann::json j = load_json_file(runs_path);
  std::vector<RunRecord> records;
  for (const auto& jr : j) records.push_back(run_record_from_json(jr));
  auto files = emit_report(records, out_dir, parse_report_format(format));
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimizer laboratory: training runs, grid sweeps, g-SNR traces, state-memory and step-time profiling"};
  app.require_subcommand(1);

  std::string config_file, out_dir = "out", optimizers = "sgdm,adamw,sgd-sai";
  std::string model_name = "tiny-transformer", opt_name = "sgd-sai", arch_arg, format = "csv";
  std::string in_dir = "out";
  int iters = 100, warmup = 5;
  uint64_t seed = 42;
  bool mem_csv = false;

  auto* train = app.add_subcommand("train", "run one training configuration");
  train->add_option("--config", config_file, "config JSON file")->required();
  train->add_option("--out", out_dir, "output directory");

  auto* grid = app.add_subcommand("grid", "hyperparameter grid sweep");
  grid->add_option("--config", config_file, "grid JSON file")->required();
  grid->add_option("--optimizers", optimizers, "comma-separated optimizer list");
  grid->add_option("--out", out_dir, "output directory");

  auto* prof = app.add_subcommand("profile-step", "time bare optimizer steps");
  prof->add_option("--model", model_name, "zoo model name");
  prof->add_option("--optimizer", opt_name, "optimizer name");
  prof->add_option("--iters", iters, "timed trials (>= 20)");
  prof->add_option("--warmup", warmup, "discarded warmup trials");
  prof->add_option("--seed", seed, "model seed");

  std::string mem_opt = "all";
  auto* mem = app.add_subcommand("estimate-mem", "closed-form optimizer state memory");
  mem->add_option("--arch", arch_arg, "preset name or arch JSON file")->required();
  mem->add_option("--optimizer", mem_opt, "optimizer name or 'all'");
  mem->add_option("--out", out_dir, "output directory for memory.csv");
  mem->add_flag("--csv", mem_csv, "also write memory.csv");

  auto* trace = app.add_subcommand("gsnr-trace", "train while tracing per-block g-SNR");
  trace->add_option("--config", config_file, "config JSON file")->required();
  trace->add_option("--out", out_dir, "output directory");

  auto* report = app.add_subcommand("report", "re-render stored run records");
  report->add_option("--in", in_dir, "directory containing runs.json")->required();
  report->add_option("--format", format, "csv|json|svg");
  report->add_option("--out", out_dir, "output directory (defaults to --in)");

  bool list_models = false;
  prof->add_flag("--list", list_models, "list zoo models");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_file, out_dir);
    if (grid->parsed()) return cmd_grid(config_file, optimizers, out_dir);
    if (prof->parsed()) {
      if (list_models) {
        for (const auto& m : kZoo) std::cout << m.name << ": " << m.description << "\n";
        return 0;
      }
      return cmd_profile_step(model_name, opt_name, iters, warmup, seed);
    }
    if (mem->parsed()) {
      bool write = mem_csv || mem->count("--out") > 0;
      return cmd_estimate_mem(arch_arg, mem_opt, out_dir, write);
    }
    if (trace->parsed()) return cmd_gsnr_trace(config_file, out_dir);
    if (report->parsed()) {
      fs::path out = report->count("--out") > 0 ? fs::path(out_dir) : fs::path(in_dir);
      return cmd_report(in_dir, format, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
