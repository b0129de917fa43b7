#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sailab/harness.hpp"

namespace sailab {

enum class ReportFormat { csv, json, svg };

ReportFormat parse_report_format(const std::string& s);

// Canonical text artifacts. All floats go through format_double, so
// emit -> parse -> re-emit is byte identical and repeated runs of the same
// config produce byte-identical files.
std::string metrics_csv(const std::vector<RunRecord>& records);
std::string grid_csv(const std::vector<CellResult>& cells);
std::string memory_csv(const std::vector<std::pair<ArchSpec, std::vector<MemEstimate>>>& rows);
std::vector<CellResult> grid_cells_from_csv(const std::string& csv);

nlohmann::json run_record_to_json(const RunRecord& rec);
RunRecord run_record_from_json(const nlohmann::json& j);
nlohmann::json grid_result_to_json(const GridResult& result);

// Minimal static SVG plots (well-formed XML): loss curves, g-SNR traces on
// a log scale, and bar charts for memory estimates.
std::string svg_line_plot(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& xs,
                          const std::vector<std::vector<double>>& ys, bool log_y);
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

// Renders records from a directory written by `train` / `gsnr-trace` /
// `grid` into the requested format; returns the files written.
std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& records,
                                               const std::filesystem::path& out_dir,
                                               ReportFormat format);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace sailab
