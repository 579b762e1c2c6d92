// Copyright 2026 The MPE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mpe/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "mpe/error.h"

namespace mpe {
namespace {

constexpr double kWidth = 720, kPanelHeight = 260, kMargin = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void Panel(std::ostringstream& svg, double top, const std::string& title,
           const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  const double left = kMargin, right = kWidth - 150, bottom = top + kPanelHeight - 30;
  svg << "<text x=\"" << left << "\" y=\"" << top + 14 << "\" font-size=\"14\">" << title
      << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top + 20 << "\" width=\"" << right - left
      << "\" height=\"" << bottom - top - 20 << "\" fill=\"none\" stroke=\"#888\"/>\n";
  if (!std::isfinite(x0)) {
    svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 50 << "\" font-size=\"12\">no data</text>\n";
    return;
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (right - left); };
  auto py = [&](double y) { return bottom - (y - y0) / (y1 - y0) * (bottom - top - 20); };
  svg << "<text x=\"" << left << "\" y=\"" << bottom + 14 << "\" font-size=\"10\">" << Fmt(x0)
      << "</text><text x=\"" << right - 30 << "\" y=\"" << bottom + 14 << "\" font-size=\"10\">"
      << Fmt(x1) << "</text>\n";
  svg << "<text x=\"4\" y=\"" << bottom << "\" font-size=\"10\">" << Fmt(y0)
      << "</text><text x=\"4\" y=\"" << top + 28 << "\" font-size=\"10\">" << Fmt(y1)
      << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (auto [x, y] : series[i].points) svg << Fmt(px(x)) << ',' << Fmt(py(y)) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << right + 10 << "\" y=\"" << top + 36 + 16 * i << "\" font-size=\"12\" fill=\""
        << color << "\">" << series[i].name << "</text>\n";
  }
}

}  // namespace

std::string PlotMetricsSvg(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics log is empty");
  const std::vector<std::string> header = SplitCsv(line);
  if (header.empty() || header[0] != "step") throw DataError("metrics log must start with 'step'");
  std::vector<Series> columns(header.size());
  for (size_t c = 0; c < header.size(); ++c) columns[c].name = header[c];
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = SplitCsv(line);
    if (cells.size() != header.size()) {
      throw DataError("metrics log line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " cells");
    }
    double step = 0;
    try {
      step = std::stod(cells[0]);
      for (size_t c = 1; c < cells.size(); ++c) {
        if (!cells[c].empty()) columns[c].points.emplace_back(step, std::stod(cells[c]));
      }
    } catch (const std::exception&) {
      throw DataError("metrics log line " + std::to_string(lineno) + ": bad number");
    }
  }
  std::vector<Series> losses, scores;
  for (size_t c = 1; c < columns.size(); ++c) {
    (columns[c].name.rfind("val_", 0) == 0 ? scores : losses).push_back(columns[c]);
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << 2 * kPanelHeight << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  Panel(svg, 0, "training loss", losses);
  Panel(svg, kPanelHeight, "validation F1 (mean over episodes)", scores);
  svg << "</svg>\n";
  return svg.str();
}

void PlotMetrics(const std::string& csv_path, const std::string& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot read metrics log " + csv_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string svg = PlotMetricsSvg(ss.str());
  std::ofstream out(svg_path);
  if (!out) throw DataError("cannot write " + svg_path);
  out << svg;
  if (!out) throw DataError("failed writing " + svg_path);
}

}  // namespace mpe
