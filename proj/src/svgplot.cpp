#include "twohop/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "twohop/common.hpp"

namespace twohop {

namespace {

constexpr double kWidth = 660.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 64.0, kRight = 24.0, kTop = 40.0, kBottom = 52.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee",
                          "#aa3377", "#bbbbbb", "#000000", "#ee8866", "#44bb99"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  if (std::fabs(v) >= 1000.0 || (v != 0.0 && std::fabs(v) < 0.01))
    std::snprintf(buf, sizeof(buf), "%.2g", v);
  else
    std::snprintf(buf, sizeof(buf), "%g", std::round(v * 1000.0) / 1000.0);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;

  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi <= lo) hi = lo + 1.0;
    const double m = (hi - lo) * 0.05;
    lo -= m;
    hi += m;
  }
  double frac(double v) const { return (v - lo) / (hi - lo); }
};

class SvgCanvas {
 public:
  SvgCanvas(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
             fmt(kHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
    body_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(kWidth / 2, 22, escape_xml(title), 14, "middle", "#000000", false);
    text(kLeft + kPlotW / 2, kHeight - 10, escape_xml(xlabel), 12, "middle", "#000000", false);
    if (!ylabel.empty())
      body_ += "<text x=\"16\" y=\"" + fmt(kTop + kPlotH / 2) +
               "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
               fmt(kTop + kPlotH / 2) + ")\" font-family=\"sans-serif\">" + escape_xml(ylabel) +
               "</text>\n";
    // frame
    rect(kLeft, kTop, kPlotW, kPlotH, "none", "#333333");
  }

  double px(double fx) const { return kLeft + fx * kPlotW; }
  double py(double fy) const { return kTop + (1.0 - fy) * kPlotH; }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double w = 1.0, bool dashed = false) {
    body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" +
             fmt(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + fmt(w) + "\"" +
             (dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                bool dashed) {
    if (pts.empty()) return;
    body_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.8\"" +
             (dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"";
    for (const auto& [x, y] : pts) body_ += fmt(x) + "," + fmt(y) + " ";
    body_ += "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke) {
    body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) + "\" height=\"" +
             fmt(h) + "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"" + fmt(r) + "\" fill=\"" +
             fill + "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size, const std::string& anchor,
            const std::string& color, bool escape = true) {
    body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\" fill=\"" + color +
             "\" font-family=\"sans-serif\">" + (escape ? escape_xml(s) : s) + "</text>\n";
  }

  void x_ticks(const Range& r, bool log_scale = false) {
    for (int i = 0; i <= 5; ++i) {
      const double f = i / 5.0;
      const double v = r.lo + f * (r.hi - r.lo);
      line(px(f), kTop + kPlotH, px(f), kTop + kPlotH + 4, "#333333");
      text(px(f), kTop + kPlotH + 18, fmt_tick(log_scale ? std::pow(10.0, v) : v), 10, "middle",
           "#000000");
    }
  }

  void y_ticks(const Range& r) {
    for (int i = 0; i <= 5; ++i) {
      const double f = i / 5.0;
      const double v = r.lo + f * (r.hi - r.lo);
      line(kLeft - 4, py(f), kLeft, py(f), "#333333");
      text(kLeft - 8, py(f) + 3, fmt_tick(v), 10, "end", "#000000");
      line(kLeft, py(f), kLeft + kPlotW, py(f), "#eeeeee");
    }
  }

  void legend(std::span<const std::string> labels, const std::vector<bool>& dashed) {
    double y = kTop + 12;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::string color = kPalette[i % kPaletteSize];
      line(kLeft + kPlotW - 120, y - 4, kLeft + kPlotW - 96, y - 4, color, 2.0,
           i < dashed.size() && dashed[i]);
      text(kLeft + kPlotW - 90, y, labels[i], 10, "start", "#000000");
      y += 14;
    }
  }

  void save(const std::string& path) {
    body_ += "</svg>\n";
    write_file(path, body_);
  }

 private:
  std::string body_;
};

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      std::span<const Series> series) {
  require(!series.empty(), "write_line_chart: no series");
  Range rx{1e300, -1e300}, ry{1e300, -1e300};
  for (const Series& s : series) {
    require(s.xs.size() == s.ys.size(), "write_line_chart: xs/ys mismatch in " + s.label);
    for (double v : s.xs) rx.expand(v);
    for (double v : s.ys) ry.expand(v);
  }
  rx.pad();
  ry.pad();

  SvgCanvas c(title, xlabel, ylabel);
  c.x_ticks(rx);
  c.y_ticks(ry);
  std::vector<std::string> labels;
  std::vector<bool> dashes;
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < series[i].xs.size(); ++j)
      pts.emplace_back(c.px(rx.frac(series[i].xs[j])), c.py(ry.frac(series[i].ys[j])));
    c.polyline(pts, kPalette[i % kPaletteSize], series[i].dashed);
    labels.push_back(series[i].label);
    dashes.push_back(series[i].dashed);
  }
  c.legend(labels, dashes);
  c.save(path);
}

void write_bar_chart(const std::string& path, const std::string& title, const std::string& ylabel,
                     std::span<const std::string> series_names, std::span<const BarGroup> groups) {
  require(!groups.empty(), "write_bar_chart: no groups");
  Range ry{0.0, 0.0};
  for (const BarGroup& g : groups)
    for (double v : g.values) ry.expand(v);
  ry.pad();
  ry.lo = std::min(ry.lo, 0.0);

  SvgCanvas c(title, "", ylabel);
  c.y_ticks(ry);
  const std::size_t ns = series_names.size();
  const double group_w = kPlotW / static_cast<double>(groups.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(ns, 1));
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const BarGroup& g = groups[gi];
    const double x0 = kLeft + static_cast<double>(gi) * group_w + group_w * 0.1;
    for (std::size_t si = 0; si < g.values.size(); ++si) {
      const double v = g.values[si];
      const double y_zero = c.py(ry.frac(0.0));
      const double y_val = c.py(ry.frac(v));
      c.rect(x0 + static_cast<double>(si) * bar_w, std::min(y_zero, y_val), bar_w * 0.92,
             std::fabs(y_zero - y_val), kPalette[si % kPaletteSize], "none");
    }
    c.text(x0 + group_w * 0.4, kTop + kPlotH + 18, g.label, 9, "middle", "#000000");
  }
  std::vector<bool> dashes(ns, false);
  c.legend(series_names, dashes);
  c.save(path);
}

void write_scatter(const std::string& path, const std::string& title, const std::string& xlabel,
                   const std::string& ylabel, std::span<const ScatterPoint> points, bool log_x) {
  require(!points.empty(), "write_scatter: no points");
  Range rx{1e300, -1e300}, ry{1e300, -1e300};
  auto tx = [&](double v) { return log_x ? std::log10(std::max(v, 1e-300)) : v; };
  for (const ScatterPoint& p : points) {
    rx.expand(tx(p.x));
    ry.expand(p.y);
  }
  rx.pad();
  ry.pad();

  SvgCanvas c(title, xlabel + (log_x ? " (log scale)" : ""), ylabel);
  c.x_ticks(rx, log_x);
  c.y_ticks(ry);
  for (const ScatterPoint& p : points) {
    const double x = c.px(rx.frac(tx(p.x)));
    const double y = c.py(ry.frac(p.y));
    c.circle(x, y, 4.0, kPalette[p.color % kPaletteSize]);
    if (!p.label.empty()) c.text(x + 6, y - 5, p.label, 9, "start", "#444444");
  }
  c.save(path);
}

void write_stacked_histogram(const std::string& path, const std::string& title,
                             const std::string& xlabel, std::span<const std::string> series_names,
                             const std::vector<std::vector<double>>& counts,
                             std::span<const double> bin_edges) {
  require(bin_edges.size() >= 2, "write_stacked_histogram: need >= 2 bin edges");
  const std::size_t n_bins = bin_edges.size() - 1;
  require(counts.size() == series_names.size(), "write_stacked_histogram: series mismatch");

  std::vector<double> totals(n_bins, 0.0);
  for (const auto& row : counts) {
    require(row.size() == n_bins, "write_stacked_histogram: bin count mismatch");
    for (std::size_t b = 0; b < n_bins; ++b) totals[b] += row[b];
  }
  Range ry{0.0, 1.0};
  for (double t : totals) ry.expand(t);
  ry.pad();
  ry.lo = 0.0;

  SvgCanvas c(title, xlabel, "count");
  c.y_ticks(ry);
  const double bin_w = kPlotW / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    double acc = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      const double v = counts[s][b];
      if (v <= 0.0) continue;
      const double y0 = c.py(ry.frac(acc));
      const double y1 = c.py(ry.frac(acc + v));
      c.rect(kLeft + static_cast<double>(b) * bin_w + 1.0, y1, bin_w - 2.0, y0 - y1,
             kPalette[s % kPaletteSize], "none");
      acc += v;
    }
    c.text(kLeft + static_cast<double>(b) * bin_w, kTop + kPlotH + 18, fmt_tick(bin_edges[b]), 9,
           "middle", "#000000");
  }
  c.text(kLeft + kPlotW, kTop + kPlotH + 18, fmt_tick(bin_edges[n_bins]), 9, "middle", "#000000");
  std::vector<bool> dashes(series_names.size(), false);
  c.legend(series_names, dashes);
  c.save(path);
}

}  // namespace twohop
