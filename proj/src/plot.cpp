#include "biasbench/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace bb {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 610, kTop = 50, kBottom = 390;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Loose tick label: trims trailing zeros so 0.10 prints as 0.1.
std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

Range data_range(const std::vector<const std::vector<std::pair<double, double>>*>& sets,
                 bool use_x) {
  bool first = true;
  Range r;
  for (const auto* set : sets) {
    for (const auto& [x, y] : *set) {
      const double v = use_x ? x : y;
      if (first) {
        r.lo = r.hi = v;
        first = false;
      } else {
        r.include(v);
      }
    }
  }
  if (first) throw std::invalid_argument("plot: no data points");
  if (r.lo == r.hi) {
    const double pad = r.lo == 0.0 ? 1.0 : std::abs(r.lo) * 0.1;
    r.lo -= pad;
    r.hi += pad;
  } else {
    const double pad = (r.hi - r.lo) * 0.05;
    r.lo -= pad;
    r.hi += pad;
  }
  return r;
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double step = 10.0;
  if (frac <= 1.0) step = 1.0;
  else if (frac <= 2.0) step = 2.0;
  else if (frac <= 5.0) step = 5.0;
  return step * mag;
}

class Canvas {
 public:
  Canvas(const std::string& title, const std::string& x_label, const std::string& y_label,
         Range xr, Range yr)
      : xr_(xr), yr_(yr) {
    svg_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    svg_ << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    svg_ << "<text x=\"" << (kWidth / 2) << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\""
         << " text-anchor=\"middle\">" << title << "</text>\n";
    axes(x_label, y_label);
  }

  double px(double x) const { return kLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * (kRight - kLeft); }
  double py(double y) const {
    return kBottom - (y - yr_.lo) / (yr_.hi - yr_.lo) * (kBottom - kTop);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color,
                double width) {
    if (pts.size() < 2) return;
    svg_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
         << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) svg_ << " ";
      svg_ << num(px(pts[i].first)) << "," << num(py(pts[i].second));
    }
    svg_ << "\"/>\n";
  }

  void markers(const std::vector<std::pair<double, double>>& pts, const char* color) {
    for (const auto& [x, y] : pts)
      svg_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
           << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 8 + 18 * static_cast<double>(i);
      const char* color = kPalette[i % kPaletteSize];
      svg_ << "<rect x=\"" << (kRight - 150) << "\" y=\"" << num(y - 9)
           << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
      svg_ << "<text x=\"" << (kRight - 133) << "\" y=\"" << num(y + 2)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << names[i] << "</text>\n";
    }
  }

  std::string finish() {
    svg_ << "</svg>\n";
    return svg_.str();
  }

 private:
  void axes(const std::string& x_label, const std::string& y_label) {
    const double x_step = nice_step(xr_.hi - xr_.lo);
    const double y_step = nice_step(yr_.hi - yr_.lo);
    for (double t = std::ceil(xr_.lo / x_step) * x_step; t <= xr_.hi + 1e-12; t += x_step) {
      svg_ << "<line x1=\"" << num(px(t)) << "\" y1=\"" << kTop << "\" x2=\"" << num(px(t))
           << "\" y2=\"" << kBottom << "\" stroke=\"#e0e0e0\"/>\n";
      svg_ << "<text x=\"" << num(px(t)) << "\" y=\"" << (kBottom + 18)
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
           << tick_label(t) << "</text>\n";
    }
    for (double t = std::ceil(yr_.lo / y_step) * y_step; t <= yr_.hi + 1e-12; t += y_step) {
      svg_ << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(t)) << "\" x2=\"" << kRight
           << "\" y2=\"" << num(py(t)) << "\" stroke=\"#e0e0e0\"/>\n";
      svg_ << "<text x=\"" << (kLeft - 8) << "\" y=\"" << num(py(t) + 4)
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
           << tick_label(t) << "</text>\n";
    }
    svg_ << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
         << kBottom << "\" stroke=\"black\"/>\n";
    svg_ << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
         << kBottom << "\" stroke=\"black\"/>\n";
    svg_ << "<text x=\"" << ((kLeft + kRight) / 2) << "\" y=\"" << (kBottom + 40)
         << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << x_label
         << "</text>\n";
    svg_ << "<text x=\"18\" y=\"" << ((kTop + kBottom) / 2)
         << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\""
         << " transform=\"rotate(-90 18 " << ((kTop + kBottom) / 2) << ")\">" << y_label
         << "</text>\n";
  }

  Range xr_, yr_;
  std::ostringstream svg_;
};

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("svg_line_chart: no series");
  std::vector<const std::vector<std::pair<double, double>>*> sets;
  for (const auto& s : series) sets.push_back(&s.points);
  Canvas canvas(title, x_label, y_label, data_range(sets, true), data_range(sets, false));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    auto sorted = series[i].points;
    std::sort(sorted.begin(), sorted.end());
    canvas.polyline(sorted, color, 1.8);
    canvas.markers(sorted, color);
    names.push_back(series[i].name);
  }
  canvas.legend(names);
  return canvas.finish();
}

std::string svg_scatter_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const Series& points,
                              const std::vector<std::pair<double, double>>& curve) {
  std::vector<const std::vector<std::pair<double, double>>*> sets{&points.points};
  if (!curve.empty()) sets.push_back(&curve);
  Canvas canvas(title, x_label, y_label, data_range(sets, true), data_range(sets, false));
  if (!curve.empty()) {
    auto sorted = curve;
    std::sort(sorted.begin(), sorted.end());
    canvas.polyline(sorted, kPalette[1], 1.8);
  }
  canvas.markers(points.points, kPalette[0]);
  canvas.legend({points.name});
  return canvas.finish();
}

}  // namespace bb
