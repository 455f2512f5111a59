#ifndef KWNG_EXPERIMENTS_SVG_HPP
#define KWNG_EXPERIMENTS_SVG_HPP

// Minimal self-contained SVG line and box charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/experiments/sweep.hpp"

namespace kwng::experiments {

struct Series {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> lo, hi;  // optional error bars, same length as y
  bool line = true;
  bool markers = true;
};

struct Chart {
  std::string title, xlabel, ylabel;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

namespace svg_detail {

inline constexpr double kWidth = 640, kHeight = 420;
inline constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
inline const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const {
    const double a = log ? std::log10(v) : v;
    return (a - lo) / (hi - lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::ceil(lo - 1e-9); e <= hi + 1e-9; e += 1.0) out.push_back(std::pow(10.0, e));
      if (out.size() < 2) out = {std::pow(10.0, lo), std::pow(10.0, hi)};
      return out;
    }
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double f : {1.0, 2.0, 5.0, 10.0}) {
      step = f * mag;
      if (step >= raw) break;
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(v);
    return out;
  }
};

inline Axis make_axis(std::vector<double> values, bool log) {
  Axis a;
  a.log = log;
  std::vector<double> used;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    used.push_back(log ? std::log10(v) : v);
  }
  if (used.empty()) return a;
  a.lo = *std::min_element(used.begin(), used.end());
  a.hi = *std::max_element(used.begin(), used.end());
  if (a.hi - a.lo < 1e-12) {
    a.lo -= log ? 0.5 : std::max(1.0, std::abs(a.lo) * 0.1);
    a.hi += log ? 0.5 : std::max(1.0, std::abs(a.hi) * 0.1);
  } else {
    const double pad = 0.05 * (a.hi - a.lo);
    a.lo -= pad;
    a.hi += pad;
  }
  return a;
}

inline void frame(std::ostringstream& os, const std::string& title, const std::string& xlabel,
                  const std::string& ylabel) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  os << "<text x=\"" << kLeft + (kWidth - kLeft - kRight) / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << kTop + (kHeight - kTop - kBottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
     << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
}

inline double px(const Axis& a, double v) { return kLeft + a.map(v) * (kWidth - kLeft - kRight); }
inline double py(const Axis& a, double v) { return kHeight - kBottom - a.map(v) * (kHeight - kTop - kBottom); }

inline void y_ticks(std::ostringstream& os, const Axis& ay) {
  for (double t : ay.ticks()) {
    const double y = py(ay, t);
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
       << "\" stroke=\"black\"/><text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
       << num(t) << "</text>\n";
  }
}

inline std::string finish(std::ostringstream& os) {
  os << "</svg>\n";
  return os.str();
}

}  // namespace svg_detail

inline std::string render_svg(const Chart& chart) {
  using namespace svg_detail;
  std::vector<double> xs, ys;
  for (const auto& s : chart.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
    ys.insert(ys.end(), s.lo.begin(), s.lo.end());
    ys.insert(ys.end(), s.hi.begin(), s.hi.end());
  }
  const Axis ax = make_axis(xs, chart.log_x);
  const Axis ay = make_axis(ys, chart.log_y);
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!chart.log_x || x > 0) && (!chart.log_y || y > 0);
  };

  std::ostringstream os;
  frame(os, chart.title, chart.xlabel, chart.ylabel);
  for (double t : ax.ticks()) {
    const double x = px(ax, t);
    os << "<line x1=\"" << x << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << x << "\" y2=\""
       << kHeight - kBottom + 4 << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18
       << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  y_ticks(os, ay);

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.line) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (ok(s.x[i], s.y[i])) os << px(ax, s.x[i]) << ',' << py(ay, s.y[i]) << ' ';
      }
      os << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!ok(s.x[i], s.y[i])) continue;
      const double x = px(ax, s.x[i]);
      if (i < s.lo.size() && i < s.hi.size() && ok(s.x[i], s.lo[i]) && ok(s.x[i], s.hi[i])) {
        os << "<line x1=\"" << x << "\" y1=\"" << py(ay, s.lo[i]) << "\" x2=\"" << x << "\" y2=\""
           << py(ay, s.hi[i]) << "\" stroke=\"" << color << "\"/>\n";
      }
      if (s.markers) {
        os << "<circle cx=\"" << x << "\" cy=\"" << py(ay, s.y[i]) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 30
       << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
       << kWidth - kRight + 35 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
  }
  return finish(os);
}

/// One box per group: quartile box, median line, whiskers at min and max.
inline std::string render_box_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<BoxGroup>& groups, bool log_y) {
  using namespace svg_detail;
  std::vector<double> ys;
  for (const auto& g : groups) ys.insert(ys.end(), g.values.begin(), g.values.end());
  const Axis ay = make_axis(ys, log_y);
  std::ostringstream os;
  frame(os, title, xlabel, ylabel);
  y_ticks(os, ay);
  const double slot = (kWidth - kLeft - kRight) / std::max<double>(1.0, static_cast<double>(groups.size()));
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const double cx = kLeft + slot * (static_cast<double>(k) + 0.5);
    os << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 18 << "\" text-anchor=\"middle\">"
       << escape(groups[k].label) << "</text>\n";
    std::vector<double> v;
    for (double x : groups[k].values)
      if (std::isfinite(x) && (!log_y || x > 0)) v.push_back(x);
    if (v.empty()) continue;
    const double q1 = quantile_of(v, 0.25), med = quantile_of(v, 0.5), q3 = quantile_of(v, 0.75);
    const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    const double w = 0.3 * slot;
    os << "<line x1=\"" << cx << "\" y1=\"" << py(ay, lo) << "\" x2=\"" << cx << "\" y2=\"" << py(ay, hi)
       << "\" stroke=\"black\"/>\n";
    os << "<rect x=\"" << cx - w << "\" y=\"" << py(ay, q3) << "\" width=\"" << 2 * w << "\" height=\""
       << std::max(0.5, py(ay, q1) - py(ay, q3)) << "\" fill=\"" << kPalette[0]
       << "\" fill-opacity=\"0.35\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << cx - w << "\" y1=\"" << py(ay, med) << "\" x2=\"" << cx + w << "\" y2=\"" << py(ay, med)
       << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  return finish(os);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), ErrorCode::InvalidArgument, "cannot open output file");
  os << text;
  check(static_cast<bool>(os), ErrorCode::InvalidArgument, "write failed");
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_SVG_HPP
