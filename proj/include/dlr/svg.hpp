#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "dlr/io.hpp"

namespace dlr {

// ============================================================================
// Standalone SVG renderers (no external dependencies)
// ============================================================================
//
// Figures are artifacts, not an interactive surface: a fixed-size line chart
// and a heatmap, emitted next to their CSV siblings.

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

inline std::string svg_line_chart(const std::string& title, const std::vector<SvgSeries>& series,
                                  int width = 640, int height = 400) {
  const int ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmin >= xmax) xmax = xmin + 1;
  if (ymin >= ymax) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
     << height - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
     << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double xv = xmin + (xmax - xmin) * tick / 4;
    const double yv = ymin + (ymax - ymin) * tick / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(xv) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4
       << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(yv) << "</text>\n";
  }
  int legend_y = mt;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << width - mr - 4 << "\" y=\"" << legend_y
       << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">" << s.label
       << "</text>\n";
    legend_y += 14;
  }
  os << "</svg>\n";
  return os.str();
}

// values[row][col] in [lo, hi], rendered blue -> white -> red.
inline std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_names,
                               const std::vector<std::vector<double>>& values, double lo,
                               double hi, int cell = 36) {
  const int rows = static_cast<int>(values.size());
  const int cols = rows ? static_cast<int>(values[0].size()) : 0;
  const int ml = 70, mt = 40;
  const int width = ml + cols * cell + 20, height = mt + rows * cell + 30;
  auto channel = [](double t) { return static_cast<int>(255 * std::min(1.0, std::max(0.0, t))); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  for (int r = 0; r < rows; ++r) {
    os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + r * cell + cell / 2 + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << row_names[r] << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const double t = (values[r][c] - lo) / (hi - lo);
      // t=0 blue, t=0.5 white, t=1 red
      const int rr = channel(t <= 0.5 ? 2 * t : 1.0);
      const int gg = channel(t <= 0.5 ? 2 * t : 2 - 2 * t);
      const int bb = channel(t <= 0.5 ? 1.0 : 2 - 2 * t);
      os << "<rect x=\"" << ml + c * cell << "\" y=\"" << mt + r * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"rgb(" << rr << "," << gg << "," << bb
         << ")\" stroke=\"gray\"/>\n";
      os << "<text x=\"" << ml + c * cell + cell / 2 << "\" y=\"" << mt + r * cell + cell / 2 + 4
         << "\" text-anchor=\"middle\" font-size=\"9\">" << fmt(values[r][c]) << "</text>\n";
    }
  }
  for (int c = 0; c < cols; ++c) {
    os << "<text x=\"" << ml + c * cell + cell / 2 << "\" y=\"" << mt + rows * cell + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << c + 1 << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace dlr
