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

#include "percentdelta/metrics.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <limits>
#include <stdexcept>

#include "percentdelta/ops.hpp"

namespace pdelta {

const char* const kMetricsHeader =
    "step,tensor_name,l1_w,l1_delta_raw,l1_delta_applied,rel_delta_raw,rel_delta_applied,"
    "mean_rel_delta_raw,multiplier,gamma,loss,test_accuracy";

double relative_delta(const Tensor& delta, const Tensor& w) {
  require_same_shape(delta, w, "relative_delta");
  const double denom = l1_norm(w);
  if (denom == 0.0) return kUndefinedRatio;
  return l1_norm(delta) / denom;
}

double mean_relative_delta(const Tensor& delta, const Tensor& w, double eps) {
  require_same_shape(delta, w, "mean_relative_delta");
  if (w.size() == 0) return kUndefinedRatio;
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double guarded = w[i] + (w[i] < 0.0 ? -eps : eps);
    sum += std::abs(delta[i] / guarded);
  }
  return sum / static_cast<double>(w.size());
}

double spread(std::span<const StepRecord> records, SpreadColumn column) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const StepRecord& r : records) {
    const double v =
        column == SpreadColumn::kRelDeltaRaw ? r.rel_delta_raw : r.mean_rel_delta_raw;
    if (v < 0.0) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo <= hi)) throw std::invalid_argument("spread: no tensor has a defined relative delta");
  if (lo == 0.0) throw std::invalid_argument("spread: a tensor has zero relative delta");
  return hi / lo;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string to_csv_row(const StepRecord& r) {
  std::string row = std::to_string(r.step);
  row += ',';
  row += r.tensor_name;
  for (double v : {r.l1_w, r.l1_delta_raw, r.l1_delta_applied, r.rel_delta_raw,
                   r.rel_delta_applied, r.mean_rel_delta_raw, r.multiplier, r.gamma, r.loss}) {
    row += ',';
    row += format_double(v);
  }
  row += ',';
  if (r.test_accuracy) row += format_double(*r.test_accuracy);
  return row;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& field, const std::string& line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  // ERANGE on underflow still yields the correctly rounded subnormal.
  if (field.empty() || *end != '\0' || (errno == ERANGE && std::isinf(v))) {
    throw std::invalid_argument("metrics CSV: bad number '" + field + "' in row: " + line);
  }
  return v;
}

}  // namespace

StepRecord parse_csv_row(const std::string& line) {
  const std::vector<std::string> f = split_fields(line);
  if (f.size() != 12) {
    throw std::invalid_argument("metrics CSV: expected 12 fields, got " +
                                std::to_string(f.size()) + " in row: " + line);
  }
  StepRecord r;
  char* end = nullptr;
  r.step = std::strtoll(f[0].c_str(), &end, 10);
  if (f[0].empty() || *end != '\0') {
    throw std::invalid_argument("metrics CSV: bad step '" + f[0] + "' in row: " + line);
  }
  r.tensor_name = f[1];
  double* targets[] = {&r.l1_w,           &r.l1_delta_raw,       &r.l1_delta_applied,
                       &r.rel_delta_raw,  &r.rel_delta_applied,  &r.mean_rel_delta_raw,
                       &r.multiplier,     &r.gamma,              &r.loss};
  for (std::size_t i = 0; i < 9; ++i) *targets[i] = parse_double(f[i + 2], line);
  if (!f[11].empty()) r.test_accuracy = parse_double(f[11], line);
  return r;
}

std::vector<StepRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::invalid_argument("metrics CSV: missing or unexpected header");
  }
  std::vector<StepRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(parse_csv_row(line));
  }
  return records;
}

std::vector<StepRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics CSV " + path.string());
  try {
    return read_metrics_csv(in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

MetricsSink::MetricsSink(std::filesystem::path path)
    : path_(std::move(path)), out_(path_, std::ios::binary | std::ios::trunc) {
  check("open");
  out_ << kMetricsHeader << '\n';
  out_.flush();
  check("write header to");
}

void MetricsSink::write(std::span<const StepRecord> records) {
  for (const StepRecord& r : records) out_ << to_csv_row(r) << '\n';
  out_.flush();
  check("write to");
}

void MetricsSink::check(const char* what) {
  if (!out_) {
    throw std::runtime_error(std::string("cannot ") + what + " metrics CSV " + path_.string() +
                             ": " + std::strerror(errno));
  }
}

void record_step(std::span<const StepRecord> records, MetricsSink& sink) { sink.write(records); }

}  // namespace pdelta
