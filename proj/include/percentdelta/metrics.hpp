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

// Per-step, per-tensor training instrumentation and its CSV form.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "percentdelta/tensor.hpp"

namespace pdelta {

/// Written in place of a relative quantity whose denominator is zero.
inline constexpr double kUndefinedRatio = -1.0;

struct StepRecord {
  std::int64_t step = 0;
  std::string tensor_name;
  double l1_w = 0.0;
  double l1_delta_raw = 0.0;
  double l1_delta_applied = 0.0;
  /// ||delta||_1 / ||W||_1 before momentum.
  double rel_delta_raw = 0.0;
  double rel_delta_applied = 0.0;
  /// mean_i |delta_i / W_i| before momentum, with the rule's guarded division.
  double mean_rel_delta_raw = 0.0;
  double multiplier = 0.0;
  double gamma = 0.0;
  double loss = 0.0;
  std::optional<double> test_accuracy;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// ||delta||_1 / ||w||_1, or kUndefinedRatio when ||w||_1 == 0.
double relative_delta(const Tensor& delta, const Tensor& w);

/// mean_i |delta_i / (w_i + eps * sgn(w_i))|, sgn(0) = +1; kUndefinedRatio
/// for empty tensors.
double mean_relative_delta(const Tensor& delta, const Tensor& w, double eps);

enum class SpreadColumn { kRelDeltaRaw, kMeanRelDeltaRaw };

/// max / min of the chosen column over one step's records, ignoring
/// undefined entries. Throws std::invalid_argument when nothing is usable
/// (no records, or a minimum of zero).
double spread(std::span<const StepRecord> records,
              SpreadColumn column = SpreadColumn::kRelDeltaRaw);

extern const char* const kMetricsHeader;

/// Shortest form is not used: every float is written with %.17g so any
/// reader's strtod recovers the exact bits.
std::string format_double(double value);

std::string to_csv_row(const StepRecord& record);
/// Throws std::invalid_argument on malformed rows.
StepRecord parse_csv_row(const std::string& line);

std::vector<StepRecord> read_metrics_csv(std::istream& in);
std::vector<StepRecord> read_metrics_csv(const std::filesystem::path& path);

/// Append-only metrics CSV writer. The header is written on open, rows are
/// flushed after every write() call.
class MetricsSink {
 public:
  explicit MetricsSink(std::filesystem::path path);

  void write(std::span<const StepRecord> records);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void check(const char* what);

  std::filesystem::path path_;
  std::ofstream out_;
};

void record_step(std::span<const StepRecord> records, MetricsSink& sink);

}  // namespace pdelta
