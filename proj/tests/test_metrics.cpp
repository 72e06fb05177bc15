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


// Relative-delta metrics, spread and the metrics CSV.

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "percentdelta/metrics.hpp"
#include "test_util.hpp"

using namespace pdelta;
using pdelta::testing::same_bits;
using pdelta::testing::slurp;
using pdelta::testing::TempDir;

namespace {

StepRecord random_record(Rng& rng, std::int64_t step, const std::string& name) {
  StepRecord r;
  r.step = step;
  r.tensor_name = name;
  // Values spanning many binades, including subnormal-adjacent and negative.
  auto draw = [&] { return std::ldexp(rng.uniform() - 0.3, int(rng.below(200)) - 100); };
  r.l1_w = draw();
  r.l1_delta_raw = draw();
  r.l1_delta_applied = draw();
  r.rel_delta_raw = rng.below(5) ? draw() : kUndefinedRatio;
  r.rel_delta_applied = draw();
  r.mean_rel_delta_raw = draw();
  r.multiplier = draw();
  r.gamma = 0.1 + rng.uniform();
  r.loss = draw();
  if (rng.below(2)) r.test_accuracy = rng.uniform();
  return r;
}

StepRecord with_rel(double rel) {
  StepRecord r;
  r.rel_delta_raw = rel;
  r.mean_rel_delta_raw = rel;
  return r;
}

}  // namespace

TEST_CASE("relative delta") {
  CHECK(relative_delta(Tensor({2}, {0.1, -0.2}), Tensor({2}, {1, -2})) ==
        doctest::Approx(0.1).epsilon(1e-15));
  CHECK(relative_delta(Tensor({2}), Tensor({2}, {1, -2})) == 0.0);
  CHECK(relative_delta(Tensor({2}, {1, 1}), Tensor({2})) == kUndefinedRatio);
  CHECK(kUndefinedRatio == -1.0);
}

TEST_CASE("mean relative delta uses guarded division") {
  CHECK(mean_relative_delta(Tensor({2}, {0.5, -1}), Tensor({2}, {1, 2}), 0.0) == 0.5);
  CHECK(mean_relative_delta(Tensor({1}, {1e-8}), Tensor({1}), 1e-8) == 1.0);
  CHECK(mean_relative_delta(Tensor({0}), Tensor({0}), 1e-8) == kUndefinedRatio);
}

TEST_CASE("spread") {
  const std::vector<StepRecord> equal = {with_rel(0.2), with_rel(0.2), with_rel(0.2)};
  CHECK(spread(equal) == 1.0);
  const std::vector<StepRecord> wide = {with_rel(0.1), with_rel(0.0001)};
  CHECK(spread(wide) == doctest::Approx(1000.0).epsilon(1e-12));
  const std::vector<StepRecord> sentinel = {with_rel(0.1), with_rel(kUndefinedRatio),
                                            with_rel(0.05)};
  CHECK(spread(sentinel) == 2.0);
  CHECK(spread(sentinel, SpreadColumn::kMeanRelDeltaRaw) == 2.0);
  CHECK_THROWS_AS(spread(std::vector<StepRecord>{}), std::invalid_argument);
  const std::vector<StepRecord> none = {with_rel(kUndefinedRatio)};
  CHECK_THROWS_AS(spread(none), std::invalid_argument);
  const std::vector<StepRecord> zero = {with_rel(0.0), with_rel(0.1)};
  CHECK_THROWS_AS(spread(zero), std::invalid_argument);
}

TEST_CASE("csv header") {
  CHECK(std::string(kMetricsHeader) ==
        "step,tensor_name,l1_w,l1_delta_raw,l1_delta_applied,rel_delta_raw,rel_delta_applied,"
        "mean_rel_delta_raw,multiplier,gamma,loss,test_accuracy");
}

TEST_CASE("csv rows round-trip bit-exactly") {
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const StepRecord r = random_record(rng, i, "layer" + std::to_string(i % 8) + "/kernel");
    const StepRecord back = parse_csv_row(to_csv_row(r));
    REQUIRE(back == r);
    REQUIRE(same_bits(back.l1_w, r.l1_w));
    REQUIRE(same_bits(back.loss, r.loss));
  }
  StepRecord tiny;
  tiny.l1_w = std::numeric_limits<double>::denorm_min();
  tiny.multiplier = std::numeric_limits<double>::max();
  tiny.loss = -0.0;
  const StepRecord back = parse_csv_row(to_csv_row(tiny));
  CHECK(same_bits(back.l1_w, tiny.l1_w));
  CHECK(same_bits(back.multiplier, tiny.multiplier));
  CHECK(same_bits(back.loss, tiny.loss));
}

TEST_CASE("absent accuracy is an empty field") {
  StepRecord r;
  r.tensor_name = "fc0/bias";
  const std::string row = to_csv_row(r);
  CHECK(row.back() == ',');
  CHECK_FALSE(parse_csv_row(row).test_accuracy.has_value());
  r.test_accuracy = 0.5;
  CHECK(to_csv_row(r).substr(to_csv_row(r).size() - 4) == ",0.5");
}

TEST_CASE("malformed rows are rejected") {
  CHECK_THROWS_AS(parse_csv_row("1,a,2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv_row("x,a,1,1,1,1,1,1,1,1,1,"), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv_row("1,a,1,1,1,1,1,1,1,1,1,,extra"), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv_row("1,a,1,1,1,1,1,1,1,1,1.5x,"), std::invalid_argument);
}

TEST_CASE("sink writes rows in order and round-trips") {
  TempDir dir("metrics");
  std::vector<StepRecord> all;
  {
    MetricsSink sink(dir / "metrics.csv");
    Rng rng(7);
    for (std::int64_t s = 0; s < 3; ++s) {
      std::vector<StepRecord> recs;
      for (int k = 0; k < 8; ++k) recs.push_back(random_record(rng, s, "t" + std::to_string(k)));
      record_step(recs, sink);
      all.insert(all.end(), recs.begin(), recs.end());
    }
    // Rows are flushed per step: readable before the sink closes.
    CHECK(read_metrics_csv(dir / "metrics.csv").size() == 24);
  }
  const std::vector<StepRecord> back = read_metrics_csv(dir / "metrics.csv");
  REQUIRE(back.size() == 24);
  CHECK(back == all);
  const std::string text = slurp(dir / "metrics.csv");
  CHECK(text.find('\r') == std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 25);
}

TEST_CASE("empty record list leaves a valid header-only file") {
  TempDir dir("metrics_empty");
  {
    MetricsSink sink(dir / "m.csv");
    record_step({}, sink);
  }
  CHECK(slurp(dir / "m.csv") == std::string(kMetricsHeader) + "\n");
  CHECK(read_metrics_csv(dir / "m.csv").empty());
}

TEST_CASE("sink errors carry the path") {
  try {
    MetricsSink sink("/nonexistent-dir/sub/metrics.csv");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("/nonexistent-dir/sub/metrics.csv") != std::string::npos);
  }
}

TEST_CASE("reader rejects a wrong header") {
  std::istringstream in("step,name\n");
  CHECK_THROWS_AS(read_metrics_csv(in), std::invalid_argument);
}
