#pragma once

#include <span>
#include <string>
#include <vector>

namespace twohop {

// Small deterministic SVG chart emitters. Output is byte-stable for
// identical inputs; every chart's data is also emitted separately by the
// report layer.

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  bool dashed = false;
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      std::span<const Series> series);

struct BarGroup {
  std::string label;                // x-axis tick label
  std::vector<double> values;       // one per series
};

void write_bar_chart(const std::string& path, const std::string& title, const std::string& ylabel,
                     std::span<const std::string> series_names, std::span<const BarGroup> groups);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  int color = 0;
};

void write_scatter(const std::string& path, const std::string& title, const std::string& xlabel,
                   const std::string& ylabel, std::span<const ScatterPoint> points,
                   bool log_x = false);

// stacked histogram: counts[series][bin], bins defined by edges
void write_stacked_histogram(const std::string& path, const std::string& title,
                             const std::string& xlabel, std::span<const std::string> series_names,
                             const std::vector<std::vector<double>>& counts,
                             std::span<const double> bin_edges);

}  // namespace twohop
