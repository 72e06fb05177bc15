// Copyright 2026 The PercentDelta Lab Authors. All Rights Reserved.
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

#include "percentdelta/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace pdelta {

std::vector<double> smooth(std::span<const double> values, double factor) {
  if (!(factor >= 0.0 && factor < 1.0)) {
    throw std::invalid_argument("smoothing factor must lie in [0, 1), got " +
                                format_double(factor));
  }
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    out[i] = values[i] + factor * (out[i - 1] - values[i]);
  }
  return out;
}

Series accuracy_series(std::span<const StepRecord> records, std::string label) {
  Series s;
  s.label = std::move(label);
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (const StepRecord& r : records) {
    if (!r.test_accuracy || r.step == last) continue;
    last = r.step;
    s.x.push_back(static_cast<double>(r.step));
    s.y.push_back(*r.test_accuracy);
  }
  return s;
}

std::vector<std::pair<double, double>> curve_vertices(const Series& series, double smoothing) {
  if (series.x.size() != series.y.size()) {
    throw std::invalid_argument("series '" + series.label + "': x and y lengths differ");
  }
  const std::vector<double> ys = smooth(series.y, smoothing);
  std::vector<std::pair<double, double>> out;
  out.reserve(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) out.emplace_back(series.x[i], ys[i]);
  return out;
}

namespace {

constexpr double kWidth = 760;
constexpr double kLeft = 70;
constexpr double kRight = 190;
constexpr double kTop = 40;
constexpr double kPlotHeight = 300;
constexpr double kBottom = 50;
constexpr const char* kHighlight = "#d62728";
constexpr const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
                                    "#7f7f7f", "#bcbd22", "#17becf", "#ff7f0e", "#393b79"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Round step for about `target` ticks over [lo, hi].
double nice_step(double lo, double hi, int target) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (f * mag >= raw) return f * mag;
  }
  return 10.0 * mag;
}

struct Frame {
  double x0, x1, y0, y1;  // data range
  double left, top, width, height;  // pixels

  double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

void open_svg(std::string& svg, double height) {
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void text(std::string& svg, double x, double y, const std::string& s, const char* anchor,
          const std::string& extra = "") {
  svg += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"" + extra +
         ">" + escape(s) + "</text>\n";
}

void line(std::string& svg, double x1, double y1, double x2, double y2, const char* stroke) {
  svg += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
         num(y2) + "\" stroke=\"" + stroke + "\"/>\n";
}

void axes_box(std::string& svg, const Frame& f) {
  svg += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width) +
         "\" height=\"" + num(f.height) + "\" fill=\"none\" stroke=\"black\"/>\n";
}

void legend_entry(std::string& svg, double x, double y, const char* color,
                  const std::string& label, bool bar) {
  if (bar) {
    svg += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
           color + "\"/>\n";
  } else {
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(y - 4) + "\" x2=\"" + num(x + 14) +
           "\" y2=\"" + num(y - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
  }
  text(svg, x + 18, y, label, "start");
}

}  // namespace

std::string accuracy_curve_svg(std::span<const Series> series, const CurveOptions& options) {
  std::vector<std::vector<std::pair<double, double>>> curves;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Series& s : series) {
    auto v = curve_vertices(s, options.smoothing);
    if (options.x_max) {
      std::erase_if(v, [&](const auto& p) { return p.first > *options.x_max; });
    }
    for (const auto& [x, y] : v) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    curves.push_back(std::move(v));
  }
  if (!(xmin <= xmax)) throw std::invalid_argument("accuracy curve: no data points");
  if (options.y_min) ymin = *options.y_min;
  if (options.y_max) ymax = *options.y_max;
  if (!(ymin < ymax)) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  if (xmin == xmax) xmax = xmin + 1.0;

  const Frame f{xmin, xmax, ymin, ymax, kLeft, kTop, kWidth - kLeft - kRight, kPlotHeight};
  std::string svg;
  open_svg(svg, kTop + kPlotHeight + kBottom);
  text(svg, f.left + f.width / 2, 22, options.title, "middle", " font-size=\"14\"");
  svg += "<defs><clipPath id=\"plot-area\"><rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) +
         "\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
         "\"/></clipPath></defs>\n";

  const double xs = nice_step(xmin, xmax, 6);
  for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9 * xs; x += xs) {
    line(svg, f.px(x), f.top + f.height, f.px(x), f.top + f.height + 5, "black");
    text(svg, f.px(x), f.top + f.height + 18, tick_label(x), "middle");
  }
  const double ys = nice_step(ymin, ymax, 5);
  for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9 * ys; y += ys) {
    line(svg, f.left, f.py(y), f.left + f.width, f.py(y), "#e0e0e0");
    text(svg, f.left - 6, f.py(y) + 4, tick_label(y), "end");
  }
  axes_box(svg, f);
  text(svg, f.left + f.width / 2, f.top + f.height + 40, "training step", "middle");
  text(svg, 18, f.top + f.height / 2, "test accuracy", "middle",
       " transform=\"rotate(-90 18 " + num(f.top + f.height / 2) + ")\"");

  // Highlighted series last so it is drawn on top.
  std::vector<std::size_t> order(series.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_partition(order.begin(), order.end(),
                        [&](std::size_t i) { return !series[i].highlight; });
  for (std::size_t i : order) {
    const char* color = series[i].highlight ? kHighlight : kPalette[i % std::size(kPalette)];
    svg += "<polyline clip-path=\"url(#plot-area)\" fill=\"none\" stroke=\"" +
           std::string(color) + "\" stroke-width=\"" + (series[i].highlight ? "2.5" : "1.5") +
           "\" data-label=\"" + escape(series[i].label) + "\" points=\"";
    for (std::size_t k = 0; k < curves[i].size(); ++k) {
      if (k) svg += ' ';
      svg += num(f.px(curves[i][k].first)) + "," + num(f.py(curves[i][k].second));
    }
    svg += "\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = series[i].highlight ? kHighlight : kPalette[i % std::size(kPalette)];
    legend_entry(svg, f.left + f.width + 14, f.top + 12 + 18 * static_cast<double>(i), color,
                 series[i].label + (series[i].highlight ? " (best)" : ""), false);
  }
  svg += "</svg>\n";
  return svg;
}

BarPanel relative_delta_panel(std::span<const StepRecord> records, std::string title,
                              std::int64_t stride, std::size_t max_groups) {
  if (stride < 1) throw std::invalid_argument("bar stride must be positive");
  std::map<std::int64_t, BarGroup> groups;
  for (const StepRecord& r : records) {
    if (r.step % stride != 0) continue;
    if (groups.size() == max_groups && !groups.contains(r.step)) continue;
    BarGroup& g = groups[r.step];
    g.label = "step " + std::to_string(r.step);
    g.bars.emplace_back(r.tensor_name, r.rel_delta_raw);
  }
  BarPanel panel{std::move(title), {}};
  for (auto& [step, g] : groups) panel.groups.push_back(std::move(g));
  return panel;
}

std::string relative_delta_bars_svg(std::span<const BarPanel> panels) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::vector<std::string> names;
  for (const BarPanel& p : panels) {
    for (const BarGroup& g : p.groups) {
      for (const auto& [name, v] : g.bars) {
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
        if (v > 0.0 && std::isfinite(v)) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    }
  }
  if (!(lo <= hi)) throw std::invalid_argument("relative delta bars: no positive values");
  const double e0 = std::floor(std::log10(lo));
  const double e1 = std::max(e0 + 1.0, std::ceil(std::log10(hi)));

  const double panel_height = kPlotHeight * 0.8;
  const double panel_gap = 60;
  const double height = kTop + panels.size() * (panel_height + panel_gap) + kBottom - panel_gap;
  std::string svg;
  open_svg(svg, height);
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const BarPanel& p = panels[pi];
    const double top = kTop + pi * (panel_height + panel_gap);
    const Frame f{0.0, 1.0, e0, e1, kLeft, top, kWidth - kLeft - kRight, panel_height};
    text(svg, f.left + f.width / 2, top - 10, p.title, "middle", " font-size=\"14\"");
    for (double e = e0; e <= e1; e += 1.0) {
      line(svg, f.left, f.py(e), f.left + f.width, f.py(e), "#e0e0e0");
      text(svg, f.left - 6, f.py(e) + 4, "1e" + std::to_string(static_cast<int>(e)), "end");
    }
    axes_box(svg, f);
    text(svg, 18, top + panel_height / 2, "||delta||_1 / ||W||_1 (log)", "middle",
         " transform=\"rotate(-90 18 " + num(top + panel_height / 2) + ")\"");
    const std::size_t ng = std::max<std::size_t>(p.groups.size(), 1);
    const double group_w = f.width / static_cast<double>(ng);
    const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(names.size(), 1));
    for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
      const BarGroup& g = p.groups[gi];
      const double gx = f.left + gi * group_w + group_w * 0.1;
      text(svg, gx + group_w * 0.4, top + panel_height + 18, g.label, "middle");
      for (const auto& [name, v] : g.bars) {
        if (!(v > 0.0) || !std::isfinite(v)) continue;
        const std::size_t ni =
            static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
        const double y = f.py(std::log10(v));
        svg += "<rect x=\"" + num(gx + ni * bar_w) + "\" y=\"" + num(y) + "\" width=\"" +
               num(bar_w * 0.9) + "\" height=\"" + num(top + panel_height - y) + "\" fill=\"" +
               kPalette[ni % std::size(kPalette)] + "\"><title>" + escape(name) + " " +
               escape(g.label) + ": " + format_double(v) + "</title></rect>\n";
      }
    }
  }
  for (std::size_t ni = 0; ni < names.size(); ++ni) {
    legend_entry(svg, kWidth - kRight + 14, kTop + 12 + 18 * static_cast<double>(ni),
                 kPalette[ni % std::size(kPalette)], names[ni], true);
  }
  svg += "</svg>\n";
  return svg;
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "accuracy_curve") return PlotKind::kAccuracyCurve;
  if (name == "relative_delta_bars") return PlotKind::kRelativeDeltaBars;
  throw std::invalid_argument("unknown plot kind '" + name +
                              "' (expected accuracy_curve, relative_delta_bars)");
}

void plot(const PlotRequest& request, const std::filesystem::path& out) {
  if (request.csvs.empty()) throw std::invalid_argument("plot: no input CSVs");
  if (!request.labels.empty() && request.labels.size() != request.csvs.size()) {
    throw std::invalid_argument("plot: " + std::to_string(request.labels.size()) + " labels for " +
                                std::to_string(request.csvs.size()) + " CSVs");
  }
  std::string svg;
  std::vector<Series> series;
  std::vector<BarPanel> panels;
  for (std::size_t i = 0; i < request.csvs.size(); ++i) {
    const auto& path = request.csvs[i];
    std::string label = request.labels.empty() ? path.parent_path().filename().string()
                                               : request.labels[i];
    if (label.empty()) label = path.stem().string();
    const std::vector<StepRecord> records = read_metrics_csv(path);
    if (request.kind == PlotKind::kAccuracyCurve) {
      Series s = accuracy_series(records, label);
      s.highlight = request.highlight == i;
      if (!s.x.empty()) series.push_back(std::move(s));
    } else {
      BarPanel p = relative_delta_panel(records, label, request.bar_stride, request.bar_groups);
      if (!p.groups.empty()) panels.push_back(std::move(p));
    }
  }
  if (request.kind == PlotKind::kAccuracyCurve) {
    if (series.empty()) throw std::invalid_argument("plot: no test accuracy values in the CSVs");
    svg = accuracy_curve_svg(series, request.curve);
  } else {
    if (panels.empty()) throw std::invalid_argument("plot: no rows at the requested steps");
    svg = relative_delta_bars_svg(panels);
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << svg;
  if (!f.flush()) throw std::runtime_error("cannot write " + out.string());
}

}  // namespace pdelta
