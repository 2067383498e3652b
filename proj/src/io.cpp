#include "flowkl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flowkl {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string checksum_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::cell(double v) { return cell(std::string_view(format_double(v))); }

CsvTable& CsvTable::cell(bool flag) { return cell(std::string_view(flag ? "true" : "false")); }

CsvTable& CsvTable::cell(std::string_view text) {
  if (rows_.empty()) throw std::logic_error("CsvTable: cell before row");
  if (rows_.back().size() >= header_.size()) throw std::logic_error("CsvTable: too many cells");
  rows_.back().emplace_back(text);
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) {
    if (r.size() != header_.size()) throw std::logic_error("CsvTable: incomplete row");
    line(r);
  }
  return out;
}

namespace {

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double map(double v, double pixel_lo, double pixel_hi) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    const double frac = h > l ? (a - l) / (h - l) : 0.5;
    return pixel_lo + frac * (pixel_hi - pixel_lo);
  }
};

Axis fit_axis(const std::vector<PlotSeries>& series, bool use_x, bool log) {
  Axis axis;
  axis.log = log;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v) || (log && v <= 0.0)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = log ? 1e-3 : 0.0;
    hi = 1.0;
  }
  if (hi == lo) {
    hi = log ? lo * 10.0 : lo + 1.0;
  }
  axis.lo = lo;
  axis.hi = hi;
  return axis;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const PlotSpec& spec, std::string_view csv_checksum) {
  constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  const Axis ax = fit_axis(spec.series, true, spec.log_x);
  const Axis ay = fit_axis(spec.series, false, spec.log_y);
  auto px = [&](double v) { return ax.map(v, kLeft, kWidth - kRight); };
  auto py = [&](double v) { return ay.map(v, kHeight - kBottom, kTop); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\">\n";
  svg << "<!-- csv-checksum: " << csv_checksum << " -->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(spec.title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(spec.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">" << escape(spec.y_label) << "</text>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"10\">" << tick_label(ax.lo) << "</text>\n";
  svg << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16
      << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(ax.hi) << "</text>\n";
  svg << "<text x=\"" << kLeft - 4 << "\" y=\"" << kHeight - kBottom
      << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(ay.lo) << "</text>\n";
  svg << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 4
      << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(ay.hi) << "</text>\n";

  double legend_y = kTop + 4;
  for (const auto& s : spec.series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((spec.log_x && s.x[i] <= 0) || (spec.log_y && s.y[i] <= 0)) continue;
      svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << legend_y + 12
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">"
        << escape(s.label) << "</text>\n";
    legend_y += 14;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace flowkl
