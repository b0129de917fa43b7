#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sailab/report.hpp"

namespace py = pybind11;
using namespace sailab;

namespace {

GsnrStats py_block_stats(const std::vector<double>& g, double eps, const std::string& name) {
  return block_stats<double>(std::span<const double>(g.data(), g.size()), eps, name);
}

py::dict scale_table_to_dict(const ScaleTable& t) {
  py::dict scales;
  for (size_t i = 0; i < t.names.size(); ++i) scales[py::str(t.names[i])] = t.scales[i];
  py::dict out;
  out["scales"] = scales;
  out["epsilon"] = t.epsilon;
  out["frozen_at_step"] = t.frozen_at_step;
  out["degenerate"] = t.degenerate;
  return out;
}

py::dict py_normalize(const std::vector<GsnrStats>& stats, double eps) {
  return scale_table_to_dict(normalize(stats, eps));
}

py::dict mem_to_dict(const MemEstimate& e) {
  py::dict d;
  d["optimizer"] = opt_kind_name(e.optimizer);
  d["bytes"] = e.bytes;
  d["gibibytes"] = e.gibibytes;
  return d;
}

py::dict py_estimate(const std::string& arch_name, const std::string& optimizer) {
  const ArchSpec* a = find_arch_preset(arch_name);
  if (!a) throw py::value_error("unknown arch preset: " + arch_name);
  return mem_to_dict(estimate_state_memory(*a, parse_opt_kind(optimizer)));
}

py::dict py_estimate_spec(int64_t total_params, int64_t emb_head_params, int64_t default_blocks,
                          int64_t nonemb_mini_blocks, int bytes_per_scalar,
                          const std::string& optimizer) {
  ArchSpec a;
  a.name = "custom";
  a.total_params = total_params;
  a.emb_head_params = emb_head_params;
  a.default_blocks = default_blocks;
  a.nonemb_mini_blocks = nonemb_mini_blocks;
  a.bytes_per_scalar = bytes_per_scalar;
  return mem_to_dict(estimate_state_memory(a, parse_opt_kind(optimizer)));
}

std::string py_run_training(const std::string& config_json) {
  TrainConfig cfg = train_config_from_json(nlohmann::json::parse(config_json));
  RunRecord rec = run_training(cfg);
  rec.run_id = std::string(opt_kind_name(cfg.optimizer)) + "-0000";
  return run_record_to_json(rec).dump();
}

std::string py_run_grid(const std::string& grid_json, const std::vector<std::string>& optimizers) {
  GridSpec grid = grid_spec_from_json(nlohmann::json::parse(grid_json));
  std::vector<OptKind> kinds;
  for (const auto& s : optimizers) kinds.push_back(parse_opt_kind(s));
  return grid_result_to_json(run_grid(grid, kinds)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "optimizer laboratory core: g-SNR statistics, SGD-SaI and baseline "
            "optimizers, state-memory estimation, training/grid harness";

  py::class_<GsnrStats>(m, "GsnrStats")
      .def(py::init<>())
      .def_readwrite("block_name", &GsnrStats::block_name)
      .def_readwrite("g_norm", &GsnrStats::g_norm)
      .def_readwrite("g_var", &GsnrStats::g_var)
      .def_readwrite("g_snr", &GsnrStats::g_snr)
      .def("__repr__", [](const GsnrStats& s) {
        return "GsnrStats(block='" + s.block_name + "', norm=" + format_double(s.g_norm) +
               ", var=" + format_double(s.g_var) + ", snr=" + format_double(s.g_snr) + ")";
      });

  m.def("block_stats", &py_block_stats, py::arg("gradient"), py::arg("eps") = kDefaultGsnrEps,
        py::arg("name") = "",
        "Per-block gradient statistics: l2 norm, population variance, and "
        "g-SNR = norm / (sqrt(var) + eps).");
  m.def("normalize", &py_normalize, py::arg("stats"), py::arg("eps") = kDefaultGsnrEps,
        "Normalize block SNRs by their maximum into [0,1] scales (all-ones "
        "fallback when every SNR is zero).");
  m.def("estimate_state_memory", &py_estimate, py::arg("arch"), py::arg("optimizer"),
        "Closed-form optimizer state bytes for a named architecture preset.");
  m.def("estimate_state_memory_spec", &py_estimate_spec, py::arg("total_params"),
        py::arg("emb_head_params"), py::arg("default_blocks"), py::arg("nonemb_mini_blocks"),
        py::arg("bytes_per_scalar"), py::arg("optimizer"));
  m.def("arch_presets", [] {
    py::list out;
    for (const auto& a : builtin_arch_presets()) {
      py::dict d;
      d["name"] = a.name;
      d["total_params"] = a.total_params;
      d["emb_head_params"] = a.emb_head_params;
      d["default_blocks"] = a.default_blocks;
      d["nonemb_mini_blocks"] = a.nonemb_mini_blocks;
      d["bytes_per_scalar"] = a.bytes_per_scalar;
      d["source"] = a.source;
      out.append(d);
    }
    return out;
  });
  m.def("run_training", &py_run_training, py::arg("config_json"),
        "Run one training configuration (JSON string); returns the run record as JSON.");
  m.def("run_grid", &py_run_grid, py::arg("grid_json"), py::arg("optimizers"),
        "Run a hyperparameter grid; returns cells and Peak/Avg summaries as JSON.");
  m.def("optimizer_names", [] {
    return std::vector<std::string>{"sgdm", "adam", "adamw", "adam-mini", "prodigy", "sgd-sai"};
  });
}
