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

// Static SVG charts from metrics CSVs: test-accuracy curves and per-tensor
// relative-delta bars on a log scale.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "percentdelta/metrics.hpp"

namespace pdelta {

inline constexpr double kDefaultSmoothing = 0.9;

/// Exponential smoothing s_0 = v_0, s_i = v_i + factor * (s_{i-1} - v_i).
/// factor 0 returns the input unchanged and a constant series stays exactly
/// constant. Throws std::invalid_argument unless 0 <= factor < 1.
std::vector<double> smooth(std::span<const double> values, double factor);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// Drawn in red and on top of the others.
  bool highlight = false;
};

/// (step, test_accuracy) of every step that carries an accuracy, one point
/// per step.
Series accuracy_series(std::span<const StepRecord> records, std::string label);

/// Vertices actually drawn for `series` after smoothing, in data units.
std::vector<std::pair<double, double>> curve_vertices(const Series& series, double smoothing);

struct CurveOptions {
  double smoothing = kDefaultSmoothing;
  /// Lower end of the y axis; the data minimum when unset.
  std::optional<double> y_min;
  std::optional<double> y_max;
  /// Only plot steps <= x_max.
  std::optional<double> x_max;
  std::string title = "Test accuracy";
};

std::string accuracy_curve_svg(std::span<const Series> series, const CurveOptions& options);

struct BarGroup {
  std::string label;
  /// (tensor name, value); non-positive values are not drawn.
  std::vector<std::pair<std::string, double>> bars;
};

struct BarPanel {
  std::string title;
  std::vector<BarGroup> groups;
};

/// Rel_delta_raw of every tensor at steps 0, stride, 2*stride, ... (at most
/// max_groups groups).
BarPanel relative_delta_panel(std::span<const StepRecord> records, std::string title,
                              std::int64_t stride = 15, std::size_t max_groups = 4);

/// One grouped bar chart per panel, stacked vertically, sharing a log-scale
/// y axis.
std::string relative_delta_bars_svg(std::span<const BarPanel> panels);

enum class PlotKind { kAccuracyCurve, kRelativeDeltaBars };

PlotKind parse_plot_kind(const std::string& name);

struct PlotRequest {
  PlotKind kind = PlotKind::kAccuracyCurve;
  std::vector<std::filesystem::path> csvs;
  /// One per CSV; the parent directory name when empty.
  std::vector<std::string> labels;
  std::optional<std::size_t> highlight;
  CurveOptions curve;
  std::int64_t bar_stride = 15;
  std::size_t bar_groups = 4;
};

/// Reads the CSVs and writes the chart to `out`. Throws std::invalid_argument
/// for an empty request or when the CSVs hold nothing to draw.
void plot(const PlotRequest& request, const std::filesystem::path& out);

}  // namespace pdelta
