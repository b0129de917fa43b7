#include "sailab/profile.hpp"

#include <nlohmann/json.hpp>

#include "sailab/arch_presets_data.hpp"

namespace sailab {

MemEstimate estimate_state_memory(const ArchSpec& arch, OptKind optimizer) {
  arch.validate();
  auto d = static_cast<uint64_t>(arch.total_params);
  auto b = static_cast<uint64_t>(arch.bytes_per_scalar);
  MemEstimate est;
  est.optimizer = optimizer;
  switch (optimizer) {
    case OptKind::sgdm: est.bytes = d * b; break;
    case OptKind::adam:
    case OptKind::adamw: est.bytes = 2 * d * b; break;
    case OptKind::prodigy: est.bytes = 4 * d * b; break;
    case OptKind::adam_mini:
      est.bytes = (d + static_cast<uint64_t>(arch.emb_head_params) +
                   static_cast<uint64_t>(arch.nonemb_mini_blocks)) * b;
      break;
    case OptKind::sgd_sai:
      est.bytes = (d + static_cast<uint64_t>(arch.default_blocks)) * b;
      break;
  }
  est.gibibytes = static_cast<double>(est.bytes) / static_cast<double>(1ull << 30);
  return est;
}

namespace {

ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.name = j.at("name").get<std::string>();
  a.total_params = j.at("total_params").get<int64_t>();
  a.emb_head_params = j.at("emb_head_params").get<int64_t>();
  a.default_blocks = j.at("default_blocks").get<int64_t>();
  a.nonemb_mini_blocks = j.at("nonemb_mini_blocks").get<int64_t>();
  a.bytes_per_scalar = j.value("bytes_per_scalar", 4);
  a.source = j.value("source", "");
  a.validate();
  return a;
}

}  // namespace

const std::vector<ArchSpec>& builtin_arch_presets() {
  static const std::vector<ArchSpec> presets = [] {
    std::vector<ArchSpec> out;
    auto j = nlohmann::json::parse(kArchPresetsJson);
    for (const auto& p : j.at("presets")) out.push_back(arch_from_json(p));
    return out;
  }();
  return presets;
}

const ArchSpec* find_arch_preset(const std::string& name) {
  for (const auto& p : builtin_arch_presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

ArchSpec arch_spec_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("arch spec: ") + e.what());
  }
  try {
    return arch_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("arch spec: ") + e.what());
  }
}

}  // namespace sailab
