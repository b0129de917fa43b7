#include "sailab/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace sailab {

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "svg") return ReportFormat::svg;
  throw ConfigError("unknown report format: '" + s + "'");
}

std::string metrics_csv(const std::vector<RunRecord>& records) {
  std::string out = "run_id,step,loss,metric\n";
  for (const auto& rec : records) {
    for (size_t i = 0; i < rec.losses.size(); ++i) {
      out += rec.run_id;
      out += ',';
      out += std::to_string(i + 1);
      out += ',';
      out += format_double(rec.losses[i]);
      out += ',';
      out += format_double(rec.batch_metrics[i]);
      out += '\n';
    }
  }
  return out;
}

std::string grid_csv(const std::vector<CellResult>& cells) {
  std::string out = "optimizer,lr,wd,seed,final_metric,diverged\n";
  for (const auto& c : cells) {
    out += c.optimizer;
    out += ',';
    out += format_double(c.lr);
    out += ',';
    out += format_double(c.wd);
    out += ',';
    out += std::to_string(c.seed);
    out += ',';
    out += format_double(c.final_metric);
    out += ',';
    out += c.diverged ? "true" : "false";
    out += '\n';
  }
  return out;
}

std::vector<CellResult> grid_cells_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "optimizer,lr,wd,seed,final_metric,diverged") {
    throw ConfigError("grid csv: bad header");
  }
  std::vector<CellResult> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    size_t pos = 0;
    for (int i = 0; i < 5; ++i) {
      size_t c = line.find(',', pos);
      if (c == std::string::npos) throw ConfigError("grid csv: bad row: " + line);
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    f.push_back(line.substr(pos));
    CellResult cell;
    cell.optimizer = f[0];
    cell.lr = parse_double(f[1]);
    cell.wd = parse_double(f[2]);
    cell.seed = static_cast<uint64_t>(std::stoull(f[3]));
    cell.final_metric = parse_double(f[4]);
    cell.diverged = f[5] == "true";
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::string memory_csv(const std::vector<std::pair<ArchSpec, std::vector<MemEstimate>>>& rows) {
  std::string out = "arch,optimizer,bytes,gib\n";
  for (const auto& [arch, ests] : rows) {
    for (const auto& e : ests) {
      out += arch.name;
      out += ',';
      out += opt_kind_name(e.optimizer);
      out += ',';
      out += std::to_string(e.bytes);
      out += ',';
      out += format_double(e.gibibytes);
      out += '\n';
    }
  }
  return out;
}

nlohmann::json run_record_to_json(const RunRecord& rec) {
  nlohmann::json j;
  j["run_id"] = rec.run_id;
  j["config"] = train_config_to_json(rec.config);
  j["config_hash"] = rec.hash;
  j["losses"] = rec.losses;
  j["batch_metrics"] = rec.batch_metrics;
  j["final_metric"] = rec.final_metric;
  j["diverged"] = rec.diverged;
  j["steps_completed"] = rec.steps_completed;
  if (rec.has_trace) j["trace_csv"] = trace_to_csv(rec.trace);
  return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord rec;
  try {
    rec.run_id = j.at("run_id").get<std::string>();
    rec.config = train_config_from_json(j.at("config"));
    rec.hash = j.at("config_hash").get<std::string>();
    rec.losses = j.at("losses").get<std::vector<double>>();
    rec.batch_metrics = j.at("batch_metrics").get<std::vector<double>>();
    rec.final_metric = j.at("final_metric").get<double>();
    rec.diverged = j.at("diverged").get<bool>();
    rec.steps_completed = j.at("steps_completed").get<int64_t>();
    if (j.contains("trace_csv")) {
      rec.trace = trace_from_csv(j.at("trace_csv").get<std::string>());
      rec.has_trace = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run record: ") + e.what());
  }
  return rec;
}

nlohmann::json grid_result_to_json(const GridResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"optimizer", c.optimizer}, {"lr", c.lr}, {"wd", c.wd}, {"seed", c.seed},
                     {"final_metric", c.final_metric}, {"diverged", c.diverged}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : result.summary) {
    nlohmann::json js = {{"optimizer", s.optimizer}, {"peak_mean", s.peak_mean},
                         {"peak_std", s.peak_std}, {"peak_lr", s.peak_lr}, {"peak_wd", s.peak_wd},
                         {"runs", s.runs}};
    if (s.avg_defined) {
      js["avg_mean"] = s.avg_mean;
      js["avg_std"] = s.avg_std;
    } else {
      js["avg_mean"] = nullptr;
      js["avg_std"] = nullptr;
    }
    summary.push_back(std::move(js));
  }
  return nlohmann::json{{"cells", cells}, {"summary", summary}};
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt_coord(double v) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string svg_line_plot(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& xs,
                          const std::vector<std::vector<double>>& ys, bool log_y) {
  const double w = 760, h = 420, ml = 60, mr = 170, mt = 40, mb = 40;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (size_t s = 0; s < ys.size(); ++s) {
    for (size_t i = 0; i < ys[s].size(); ++i) {
      double y = log_y ? std::log10(std::max(ys[s][i], 1e-300)) : ys[s][i];
      double x = xs[s][i];
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) {
    double v = log_y ? std::log10(std::max(y, 1e-300)) : y;
    return h - mb - (v - ymin) / (ymax - ymin) * (h - mt - mb);
  };
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_coord(w) + "\" height=\"" +
         fmt_coord(h) + "\" viewBox=\"0 0 " + fmt_coord(w) + " " + fmt_coord(h) + "\">\n";
  out += "<rect width=\"" + fmt_coord(w) + "\" height=\"" + fmt_coord(h) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt_coord(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         xml_escape(title) + "</text>\n";
  out += "<line x1=\"" + fmt_coord(ml) + "\" y1=\"" + fmt_coord(h - mb) + "\" x2=\"" +
         fmt_coord(w - mr) + "\" y2=\"" + fmt_coord(h - mb) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + fmt_coord(ml) + "\" y1=\"" + fmt_coord(mt) + "\" x2=\"" + fmt_coord(ml) +
         "\" y2=\"" + fmt_coord(h - mb) + "\" stroke=\"black\"/>\n";
  for (size_t s = 0; s < ys.size(); ++s) {
    const char* color = kPalette[s % 10];
    std::string pts;
    for (size_t i = 0; i < ys[s].size(); ++i) {
      pts += fmt_coord(sx(xs[s][i])) + "," + fmt_coord(sy(ys[s][i])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
    if (s < series_names.size()) {
      double ly = mt + 14.0 * static_cast<double>(s + 1);
      out += "<rect x=\"" + fmt_coord(w - mr + 8) + "\" y=\"" + fmt_coord(ly - 8) +
             "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
      out += "<text x=\"" + fmt_coord(w - mr + 22) + "\" y=\"" + fmt_coord(ly) +
             "\" font-size=\"10\">" + xml_escape(series_names[s]) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  const double w = 760, h = 420, ml = 60, mr = 30, mt = 40, mb = 110;
  double vmax = 1e-12;
  for (double v : values) vmax = std::max(vmax, v);
  double bw = (w - ml - mr) / std::max<size_t>(values.size(), 1);
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_coord(w) + "\" height=\"" +
         fmt_coord(h) + "\" viewBox=\"0 0 " + fmt_coord(w) + " " + fmt_coord(h) + "\">\n";
  out += "<rect width=\"" + fmt_coord(w) + "\" height=\"" + fmt_coord(h) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt_coord(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         xml_escape(title) + "</text>\n";
  for (size_t i = 0; i < values.size(); ++i) {
    double bh = values[i] / vmax * (h - mt - mb);
    double x = ml + bw * static_cast<double>(i) + bw * 0.1;
    double y = h - mb - bh;
    out += "<rect x=\"" + fmt_coord(x) + "\" y=\"" + fmt_coord(y) + "\" width=\"" +
           fmt_coord(bw * 0.8) + "\" height=\"" + fmt_coord(bh) + "\" fill=\"" +
           kPalette[i % 10] + "\"/>\n";
    out += "<text x=\"" + fmt_coord(x + bw * 0.4) + "\" y=\"" + fmt_coord(h - mb + 14) +
           "\" text-anchor=\"end\" font-size=\"10\" transform=\"rotate(-45 " +
           fmt_coord(x + bw * 0.4) + " " + fmt_coord(h - mb + 14) + ")\">" +
           xml_escape(labels[i]) + "</text>\n";
    out += "<text x=\"" + fmt_coord(x + bw * 0.4) + "\" y=\"" + fmt_coord(y - 4) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + xml_escape(format_double(values[i])) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& records,
                                               const std::filesystem::path& out_dir,
                                               ReportFormat format) {
  if (records.empty()) throw ConfigError("emit_report: no records");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  switch (format) {
    case ReportFormat::csv: {
      auto p = out_dir / "metrics.csv";
      write_text_file(p, metrics_csv(records));
      written.push_back(p);
      for (const auto& rec : records) {
        if (rec.has_trace) {
          auto tp = out_dir / (rec.run_id + "_gsnr_trace.csv");
          write_text_file(tp, trace_to_csv(rec.trace));
          written.push_back(tp);
        }
      }
      break;
    }
    case ReportFormat::json: {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& rec : records) j.push_back(run_record_to_json(rec));
      auto p = out_dir / "metrics.json";
      write_text_file(p, j.dump(2) + "\n");
      written.push_back(p);
      break;
    }
    case ReportFormat::svg: {
      std::vector<std::string> names;
      std::vector<std::vector<double>> xs, ys;
      for (const auto& rec : records) {
        names.push_back(rec.run_id);
        std::vector<double> x(rec.losses.size());
        for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
        xs.push_back(std::move(x));
        ys.push_back(rec.losses);
      }
      auto p = out_dir / "loss_curves.svg";
      write_text_file(p, svg_line_plot("training loss", names, xs, ys, false));
      written.push_back(p);
      for (const auto& rec : records) {
        if (!rec.has_trace) continue;
        std::vector<std::string> bn = rec.trace.block_names;
        std::vector<std::vector<double>> tx, ty;
        for (size_t b = 0; b < bn.size(); ++b) {
          std::vector<double> x, y;
          for (size_t t = 0; t < rec.trace.samples.size(); ++t) {
            x.push_back(static_cast<double>(rec.trace.steps[t]));
            y.push_back(rec.trace.samples[t][b].g_snr);
          }
          tx.push_back(std::move(x));
          ty.push_back(std::move(y));
        }
        auto tp = out_dir / (rec.run_id + "_gsnr_trace.svg");
        write_text_file(tp, svg_line_plot("g-SNR per block (log scale)", bn, tx, ty, true));
        written.push_back(tp);
      }
      break;
    }
  }
  return written;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace sailab
