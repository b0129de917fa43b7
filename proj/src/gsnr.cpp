#include "sailab/gsnr.hpp"

#include <algorithm>
#include <sstream>

namespace sailab {

ScaleTable normalize(const std::vector<GsnrStats>& stats, double eps) {
  if (stats.empty()) throw std::invalid_argument("normalize: empty stats list");
  ScaleTable table;
  table.epsilon = eps;
  double max_snr = 0;
  for (const auto& s : stats) max_snr = std::max(max_snr, s.g_snr);
  table.names.reserve(stats.size());
  table.scales.reserve(stats.size());
  if (max_snr == 0.0) {
    table.degenerate = true;
    for (const auto& s : stats) {
      table.names.push_back(s.block_name);
      table.scales.push_back(1.0);
    }
    return table;
  }
  for (const auto& s : stats) {
    table.names.push_back(s.block_name);
    table.scales.push_back(s.g_snr / max_snr);
  }
  return table;
}

StabilityReport stability_report(const GsnrTrace& trace) {
  if (trace.sample_count() < 10) {
    throw std::invalid_argument("stability_report: need at least 10 samples, have " +
                                std::to_string(trace.sample_count()));
  }
  StabilityReport rep;
  rep.block_names = trace.block_names;
  size_t n_blocks = trace.block_names.size();
  int64_t n = trace.sample_count();
  rep.cv.resize(n_blocks, 0.0);
  rep.time_mean.resize(n_blocks, 0.0);
  for (size_t b = 0; b < n_blocks; ++b) {
    double lo = trace.samples[0][b].g_snr, hi = lo;
    double mean = 0;
    for (const auto& row : trace.samples) {
      mean += row[b].g_snr;
      lo = std::min(lo, row[b].g_snr);
      hi = std::max(hi, row[b].g_snr);
    }
    if (lo == hi) {  // constant series: CV is exactly zero
      rep.time_mean[b] = lo;
      rep.cv[b] = 0.0;
      continue;
    }
    mean /= static_cast<double>(n);
    double var = 0;
    for (const auto& row : trace.samples) {
      double d = row[b].g_snr - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rep.time_mean[b] = mean;
    rep.cv[b] = mean == 0.0 ? 0.0 : std::sqrt(var) / mean;
  }
  std::vector<double> cvs = rep.cv;
  std::sort(cvs.begin(), cvs.end());
  rep.median_cv = cvs.size() % 2 == 1 ? cvs[cvs.size() / 2]
                                      : 0.5 * (cvs[cvs.size() / 2 - 1] + cvs[cvs.size() / 2]);
  double lo = 0, hi = 0;
  bool first = true;
  for (double m : rep.time_mean) {
    if (m <= 0) continue;
    if (first) {
      lo = hi = m;
      first = false;
    } else {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  rep.spread = first ? 0.0 : hi / lo;
  return rep;
}

std::string trace_to_csv(const GsnrTrace& trace) {
  std::string out = "step,block,g_norm,g_var,g_snr\n";
  for (size_t t = 0; t < trace.samples.size(); ++t) {
    for (size_t b = 0; b < trace.block_names.size(); ++b) {
      const auto& s = trace.samples[t][b];
      out += std::to_string(trace.steps[t]);
      out += ',';
      out += trace.block_names[b];
      out += ',';
      out += format_double(s.g_norm);
      out += ',';
      out += format_double(s.g_var);
      out += ',';
      out += format_double(s.g_snr);
      out += '\n';
    }
  }
  return out;
}

GsnrTrace trace_from_csv(const std::string& csv) {
  GsnrTrace trace;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "step,block,g_norm,g_var,g_snr") {
    throw ConfigError("trace_from_csv: bad header");
  }
  int64_t current_step = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    while (cells.size() < 4) {
      size_t c = line.find(',', pos);
      if (c == std::string::npos) throw ConfigError("trace_from_csv: bad row: " + line);
      cells.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    cells.push_back(line.substr(pos));
    int64_t step = std::stoll(cells[0]);
    GsnrStats s;
    s.block_name = cells[1];
    s.g_norm = parse_double(cells[2]);
    s.g_var = parse_double(cells[3]);
    s.g_snr = parse_double(cells[4]);
    if (step != current_step) {
      trace.steps.push_back(step);
      trace.samples.emplace_back();
      current_step = step;
    }
    if (trace.samples.size() == 1) trace.block_names.push_back(s.block_name);
    trace.samples.back().push_back(std::move(s));
  }
  if (trace.steps.size() >= 2) {
    trace.stride = trace.steps[1] - trace.steps[0];
  }
  return trace;
}

}  // namespace sailab
