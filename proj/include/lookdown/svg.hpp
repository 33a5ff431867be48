#pragma once

// Self-contained SVG line charts. Output depends only on the input, so equal
// inputs give byte-identical documents.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lookdown/error.hpp"

namespace lookdown {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct AxesConfig {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 800;
  int height = 480;
  // Draw each series as a right-continuous step function: hold the previous
  // value up to the next x, then a vertical segment.
  bool step = false;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(std::string_view text) {
  std::string out;
  for (const char c : text) {
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

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

inline std::vector<double> nice_ticks(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (const double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) ticks.push_back(v);
  return ticks;
}

}  // namespace detail

inline std::string emit_svg(const std::vector<Series>& series, const AxesConfig& axes) {
  if (series.empty()) throw ParameterError("emit_svg: no series");
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const auto& s : series) {
    if (s.points.empty()) throw ParameterError("emit_svg: empty series");
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) throw ParameterError("emit_svg: non-finite coordinate");
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi == x_lo) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }

  constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;
  const double w = axes.width, h = axes.height;
  const double box_w = w - kLeft - kRight, box_h = h - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * box_w; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * box_h; };

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << axes.width << "\" height=\"" << axes.height
     << "\" viewBox=\"0 0 " << axes.width << " " << axes.height << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << axes.width << "\" height=\"" << axes.height << "\" fill=\"white\"/>\n";
  if (!axes.title.empty())
    os << "<text x=\"" << detail::svg_num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"15\">" << detail::xml_escape(axes.title) << "</text>\n";
  os << "<rect x=\"" << detail::svg_num(kLeft) << "\" y=\"" << detail::svg_num(kTop) << "\" width=\""
     << detail::svg_num(box_w) << "\" height=\"" << detail::svg_num(box_h)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

  os << "<g font-family=\"sans-serif\" font-size=\"11\" stroke=\"black\">\n";
  for (const double v : detail::nice_ticks(x_lo, x_hi)) {
    const double x = px(v);
    os << "<line x1=\"" << detail::svg_num(x) << "\" y1=\"" << detail::svg_num(kTop + box_h) << "\" x2=\""
       << detail::svg_num(x) << "\" y2=\"" << detail::svg_num(kTop + box_h + 5) << "\"/>\n";
    os << "<text x=\"" << detail::svg_num(x) << "\" y=\"" << detail::svg_num(kTop + box_h + 18)
       << "\" text-anchor=\"middle\" stroke=\"none\">" << detail::tick_label(v) << "</text>\n";
  }
  for (const double v : detail::nice_ticks(y_lo, y_hi)) {
    const double y = py(v);
    os << "<line x1=\"" << detail::svg_num(kLeft - 5) << "\" y1=\"" << detail::svg_num(y) << "\" x2=\""
       << detail::svg_num(kLeft) << "\" y2=\"" << detail::svg_num(y) << "\"/>\n";
    os << "<text x=\"" << detail::svg_num(kLeft - 8) << "\" y=\"" << detail::svg_num(y + 4)
       << "\" text-anchor=\"end\" stroke=\"none\">" << detail::tick_label(v) << "</text>\n";
  }
  os << "</g>\n";
  if (!axes.x_label.empty())
    os << "<text x=\"" << detail::svg_num(kLeft + box_w / 2) << "\" y=\"" << detail::svg_num(h - 10)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << detail::xml_escape(axes.x_label)
       << "</text>\n";
  if (!axes.y_label.empty())
    os << "<text x=\"14\" y=\"" << detail::svg_num(kTop + box_h / 2) << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " << detail::svg_num(kTop + box_h / 2)
       << ")\">" << detail::xml_escape(axes.y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* color = kColors[i % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    const auto& pts = series[i].points;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (axes.step && k > 0)
        os << ' ' << detail::svg_num(px(pts[k].first)) << ',' << detail::svg_num(py(pts[k - 1].second));
      os << (k ? " " : "") << detail::svg_num(px(pts[k].first)) << ',' << detail::svg_num(py(pts[k].second));
    }
    os << "\"/>\n";
    // A lone point draws no line segment, so mark it.
    if (pts.size() == 1)
      os << "<circle cx=\"" << detail::svg_num(px(pts[0].first)) << "\" cy=\"" << detail::svg_num(py(pts[0].second))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    if (!series[i].label.empty()) {
      const double ly = kTop + 14 + 16 * static_cast<double>(i);
      os << "<line x1=\"" << detail::svg_num(kLeft + box_w - 150) << "\" y1=\"" << detail::svg_num(ly - 4)
         << "\" x2=\"" << detail::svg_num(kLeft + box_w - 130) << "\" y2=\"" << detail::svg_num(ly - 4)
         << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << detail::svg_num(kLeft + box_w - 125) << "\" y=\"" << detail::svg_num(ly)
         << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::xml_escape(series[i].label) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace lookdown
