#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace flowkl {

/// 17 significant digits, so every double round-trips.
std::string format_double(double v);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

/// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string checksum_hex(std::string_view bytes);

/// Comma-separated table built in memory.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row();
  CsvTable& cell(double v);
  CsvTable& cell(std::string_view text);
  CsvTable& cell(bool flag);

  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Minimal line chart; `csv_checksum` is embedded as a comment so the plot
/// can be matched to the CSV it was drawn from.
std::string render_svg(const PlotSpec& spec, std::string_view csv_checksum);

}  // namespace flowkl
