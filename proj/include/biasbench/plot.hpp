#pragma once

#include <string>
#include <utility>
#include <vector>

namespace bb {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Standalone SVG line chart; each series gets a palette color, markers, and a
// legend entry. Deterministic output for identical inputs.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

// Scatter plot with an optional overlay curve (already sampled as points).
std::string svg_scatter_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const Series& points,
                              const std::vector<std::pair<double, double>>& curve = {});

}  // namespace bb
