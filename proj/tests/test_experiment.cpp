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


// Run configuration, training runs, sweeps and plots.

#include <cmath>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "percentdelta/experiment.hpp"
#include "percentdelta/plot.hpp"
#include "test_util.hpp"

using namespace pdelta;
using pdelta::testing::slurp;
using pdelta::testing::TempDir;

namespace {

// A few steps on synthetic images.
RunConfig quick_config(const std::filesystem::path& out, std::int64_t steps = 4) {
  RunConfig c;
  c.synthetic = true;
  c.synthetic_train = 40;
  c.synthetic_test = 20;
  c.batch_size = 10;
  c.steps = steps;
  c.eval_every = 2;
  c.out_dir = out;
  return c;
}

// y coordinates of every polyline vertex in an SVG.
std::vector<std::vector<std::pair<double, double>>> polylines(const std::string& svg) {
  std::vector<std::vector<std::pair<double, double>>> out;
  const std::regex poly("<polyline[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator();
       ++it) {
    std::vector<std::pair<double, double>> pts;
    std::istringstream in((*it)[1].str());
    std::string pair;
    while (in >> pair) {
      const auto comma = pair.find(',');
      pts.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    out.push_back(std::move(pts));
  }
  return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST_CASE("desk defaults") {
  const RunConfig c;
  CHECK(c.optimizer == RuleKind::kPercentDelta);
  CHECK(c.resolved_eta() == 0.03);
  CHECK(c.resolved_decay() == DecayKind::kClampedLinear);
  CHECK(c.decay_m == 1.0 / 300.0);
  CHECK(c.decay_beta == 0.01);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 100);
  CHECK(c.steps == 300);
  CHECK(c.train_limit == 5000u);
  CHECK(c.test_limit == 1000u);
  CHECK(c.rule().mu == 0.9);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("paper protocol config") {
  const RunConfig c = paper_config();
  CHECK(c.resolved_eta() == 0.03);
  CHECK(c.schedule().kind == DecayKind::kClampedLinear);
  CHECK(c.schedule().m == 0.01);
  CHECK(c.schedule().beta == 0.01);
  CHECK(c.rule().uses_momentum());
  CHECK(c.batch_size == 500);
  CHECK(c.steps == 5000);
  CHECK(c.eval_every == 5);
  CHECK_FALSE(c.train_limit.has_value());
}

TEST_CASE("adagrad and adam default to a constant schedule") {
  RunConfig c;
  for (RuleKind k : {RuleKind::kAdaGrad, RuleKind::kAdam}) {
    c.optimizer = k;
    CHECK(c.schedule().kind == DecayKind::kConstant);
    CHECK(c.rule().mu == 0.0);
  }
  c.optimizer = RuleKind::kSgd;
  CHECK(c.rule().mu == 0.0);
  c.optimizer = RuleKind::kLars;
  CHECK(c.rule().mu == 0.9);
}

TEST_CASE("config text round-trips") {
  RunConfig c;
  c.optimizer = RuleKind::kAdam;
  c.eta = 0.1 / 3.0;
  c.decay = DecayKind::kLinear;
  c.decay_m = 1e-3;
  c.seed = 99;
  c.train_limit = std::nullopt;
  c.data_dir = "some dir/with space";
  c.synthetic = true;
  std::istringstream in(format_config(c));
  const RunConfig back = parse_config(in);
  CHECK(format_config(back) == format_config(c));
  CHECK(*back.eta == *c.eta);
  CHECK(back.data_dir == c.data_dir);
  CHECK_FALSE(back.train_limit.has_value());
}

TEST_CASE("config parsing errors name the line") {
  std::istringstream unknown("# comment\n\nsteps = 3\nbogus = 1\n");
  try {
    parse_config(unknown);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  std::istringstream bad_number("eta = 0.03x\n");
  CHECK_THROWS_AS(parse_config(bad_number), ConfigError);
  std::istringstream no_eq("steps 3\n");
  CHECK_THROWS_AS(parse_config(no_eq), ConfigError);
  RunConfig c;
  CHECK_THROWS_AS(set_config_value(c, "optimizer", "rmsprop"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "synthetic", "maybe"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "steps", "-5"), ConfigError);
  set_config_value(c, "train_limit", "all");
  CHECK_FALSE(c.train_limit.has_value());
  set_config_value(c, "eta", "auto");
  CHECK_FALSE(c.eta.has_value());
  CHECK_THROWS_AS(load_config("/nonexistent/run.conf"), ConfigError);
}

TEST_CASE("validation") {
  RunConfig c;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.eval_every = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.smoothing = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.data_dir = "/nonexistent/mnist";
  c.out_dir = std::filesystem::temp_directory_path() / "pdelta_never_written";
  CHECK_THROWS_AS(run(c), ConfigError);
}

// ---------------------------------------------------------------------------
// Runs

TEST_CASE("synthetic desk run emits steps times tensors rows") {
  TempDir dir("run");
  RunConfig c = quick_config(dir.path(), 20);
  c.synthetic_train = 600;
  c.synthetic_test = 200;
  c.batch_size = 30;
  c.eval_every = 5;
  const RunSummary s = run(c);
  CHECK(s.status == RunStatus::kCompleted);
  CHECK(s.steps_completed == 20);
  const std::vector<StepRecord> rows = read_metrics_csv(s.metrics_path);
  CHECK(rows.size() == 20 * 8);
  for (std::size_t i = 1; i < rows.size(); ++i) REQUIRE(rows[i].step >= rows[i - 1].step);
  REQUIRE(s.curve.size() == 4);
  CHECK(s.curve.front().step == 4);
  CHECK(s.curve.back().step == 19);
  CHECK(rows.back().test_accuracy == s.curve.back().accuracy);
  CHECK_FALSE(rows.front().test_accuracy.has_value());
  CHECK(s.final_accuracy == s.curve.back().accuracy);
  CHECK(std::filesystem::exists(dir / "config.txt"));
  const std::string summary = slurp(s.summary_path);
  CHECK(summary.find("status: completed") != std::string::npos);
  CHECK(summary.find("wall_seconds: ") != std::string::npos);
  // The last step is always evaluated.
  c.steps = 7;
  c.out_dir = dir / "odd";
  CHECK(run(c).curve.back().step == 6);
}

TEST_CASE("identical config and seed give byte-identical metrics") {
  TempDir dir("det");
  const RunSummary a = run(quick_config(dir / "a"));
  const RunSummary b = run(quick_config(dir / "b"));
  CHECK(slurp(a.metrics_path) == slurp(b.metrics_path));
  RunConfig other = quick_config(dir / "c");
  other.seed = 1;
  CHECK(slurp(run(other).metrics_path) != slurp(a.metrics_path));
}

TEST_CASE("divergence is a status, not a crash, and no non-finite row is written") {
  TempDir dir("div");
  RunConfig c = quick_config(dir.path(), 6);
  c.optimizer = RuleKind::kSgd;
  c.eta = 1e12;
  const RunSummary s = run(c);
  CHECK(s.status == RunStatus::kDiverged);
  CHECK_FALSE(s.message.empty());
  CHECK(s.steps_completed < 6);
  for (const StepRecord& r : read_metrics_csv(s.metrics_path)) {
    REQUIRE(std::isfinite(r.loss));
    REQUIRE(std::isfinite(r.l1_w));
    REQUIRE(std::isfinite(r.l1_delta_raw));
  }
  CHECK(slurp(s.summary_path).find("status: diverged") != std::string::npos);

  RunConfig tight = quick_config(dir / "tight", 3);
  tight.divergence_loss = 1e-3;
  const RunSummary t = run(tight);
  CHECK(t.status == RunStatus::kDiverged);
  CHECK(t.steps_completed == 0);
  CHECK(read_metrics_csv(t.metrics_path).empty());
}

// ---------------------------------------------------------------------------
// Sweeps

TEST_CASE("grid axis parsing") {
  const GridAxis a = parse_grid_axis("eta = 0.01, 0.03 ,0.1");
  CHECK(a.key == "eta");
  CHECK(a.values == std::vector<std::string>{"0.01", "0.03", "0.1"});
  CHECK_THROWS_AS(parse_grid_axis("eta"), ConfigError);
  CHECK_THROWS_AS(parse_grid_axis("eta="), ConfigError);
  CHECK(default_eta_axis().values ==
        std::vector<std::string>{"0.001", "0.003", "0.01", "0.03", "0.1"});
}

TEST_CASE("sweep over three learning rates") {
  TempDir dir("sweep");
  const SweepResult r = sweep(quick_config(dir.path()), {parse_grid_axis("eta=0.01,0.03,0.1")});
  REQUIRE(r.cells.size() == 3);
  std::size_t dirs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) dirs += e.is_directory();
  CHECK(dirs == 3);
  CHECK(std::filesystem::exists(dir / "c00_eta-0.01" / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "c02_eta-0.1" / "summary.txt"));
  REQUIRE(r.best.has_value());
  const std::string csv = slurp(r.comparison_csv);
  CHECK(csv.rfind("cell,optimizer,eta,status,best,step,test_accuracy,smoothed_accuracy\n", 0) ==
        0);
  CHECK(count(csv, "\n") == 1 + 3 * 2);
  CHECK(count(csv, ",completed,1,") == 2);  // the best cell's two eval rows
  CHECK(std::filesystem::exists(dir / "best.txt"));
  const std::string svg = slurp(r.curves_svg);
  CHECK(polylines(svg).size() == 3);
  CHECK(svg.find("#d62728") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "accuracy_curves_raw.svg"));
  CHECK(std::filesystem::exists(dir / "accuracy_curves_early.svg"));
}

TEST_CASE("best cell is the argmax of smoothed accuracy, ties to the lower rate") {
  TempDir dir("tie");
  // eta 0 never moves the weights: every cell ends with the same accuracy.
  RunConfig base = quick_config(dir.path(), 2);
  base.optimizer = RuleKind::kSgd;
  const SweepResult r = sweep(base, {parse_grid_axis("eta=0.0,0.0"), parse_grid_axis("seed=3")});
  REQUIRE(r.best.has_value());
  CHECK(*r.best == 0);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    const auto& s = r.cells[i].summary;
    REQUIRE(s.has_value());
    CHECK(*s->final_smoothed_accuracy <=
          *r.cells[*r.best].summary->final_smoothed_accuracy);
  }
}

TEST_CASE("a diverged cell is recorded and the sweep continues") {
  TempDir dir("sweep_div");
  RunConfig base = quick_config(dir.path(), 4);
  base.optimizer = RuleKind::kSgd;
  const SweepResult r = sweep(base, {parse_grid_axis("eta=0.01,1e12")});
  REQUIRE(r.cells.size() == 2);
  CHECK(r.cells[0].status == "completed");
  CHECK(r.cells[1].status == "diverged");
  CHECK(*r.best == 0);
  const std::string csv = slurp(r.comparison_csv);
  CHECK(csv.find("c01_eta-1e12,sgd,1000000000000,diverged,0,") != std::string::npos);
}

TEST_CASE("a failing cell writes error.txt and keeps its directory") {
  TempDir dir("sweep_fail");
  RunConfig base = quick_config(dir.path(), 2);
  // The second cell asks for more examples per batch than it has.
  const SweepResult r = sweep(base, {parse_grid_axis("synthetic_train=40,5")});
  CHECK(r.cells[0].status == "completed");
  CHECK(r.cells[1].status == "failed");
  CHECK(std::filesystem::exists(dir / "c01_synthetic-train-5" / "error.txt"));
  CHECK(slurp(r.comparison_csv).find(",failed,0,,,\n") != std::string::npos);
}

TEST_CASE("sweep validates every cell before running") {
  TempDir dir("sweep_invalid");
  CHECK_THROWS_AS(sweep(quick_config(dir.path()), {parse_grid_axis("steps=2,0")}), ConfigError);
  CHECK_FALSE(std::filesystem::exists(dir / "c00_steps-2"));
  CHECK_THROWS_AS(sweep(quick_config(dir.path()), {parse_grid_axis("out_dir=a,b")}),
                  ConfigError);
  CHECK_THROWS_AS(sweep(quick_config(dir.path()), {parse_grid_axis("colour=red")}), ConfigError);
}

// ---------------------------------------------------------------------------
// Plots

TEST_CASE("smoothing") {
  const std::vector<double> v = {0.1, 0.7, 0.3, 0.9};
  CHECK(smooth(v, 0.0) == v);
  const std::vector<double> flat(10, 0.37);
  CHECK(smooth(flat, 0.9) == flat);
  const std::vector<double> s = smooth(v, 0.5);
  CHECK(s[0] == 0.1);
  CHECK(s[1] == doctest::Approx(0.4));
  CHECK(s[2] == doctest::Approx(0.35));
  CHECK_THROWS_AS(smooth(v, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(smooth(v, -0.1), std::invalid_argument);
  CHECK(smooth(std::vector<double>{}, 0.5).empty());
}

TEST_CASE("smoothing 0 draws the raw points") {
  const Series s{"a", {0, 5, 10}, {0.2, 0.8, 0.5}};
  const auto v = curve_vertices(s, 0.0);
  REQUIRE(v.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(v[i].first == s.x[i]);
    CHECK(v[i].second == s.y[i]);
  }
}

TEST_CASE("constant series draws a horizontal line") {
  const std::vector<Series> series = {{"flat", {0, 5, 10, 15}, {0.9, 0.9, 0.9, 0.9}}};
  for (double f : {0.0, 0.5, 0.99}) {
    CurveOptions o;
    o.smoothing = f;
    const auto lines = polylines(accuracy_curve_svg(series, o));
    REQUIRE(lines.size() == 1);
    for (const auto& p : lines[0]) CHECK(p.second == lines[0][0].second);
  }
}

TEST_CASE("y axis can start at 0.5") {
  const std::vector<Series> series = {{"a", {0, 5, 10}, {0.1, 0.6, 0.95}}};
  CurveOptions o;
  o.smoothing = 0.0;
  o.y_min = 0.5;
  const std::string svg = accuracy_curve_svg(series, o);
  CHECK(svg.find(">0.5<") != std::string::npos);
  CHECK(svg.find("clipPath") != std::string::npos);
  CHECK(svg.find(">0.1<") == std::string::npos);
}

TEST_CASE("accuracy series keeps one point per evaluated step") {
  std::vector<StepRecord> recs(6);
  for (std::size_t i = 0; i < 6; ++i) {
    recs[i].step = std::int64_t(i / 2);
    if (i / 2 != 1) recs[i].test_accuracy = 0.5 + 0.1 * double(i / 2);
  }
  const Series s = accuracy_series(recs, "x");
  CHECK(s.x == std::vector<double>{0, 2});
  CHECK(s.y[1] == doctest::Approx(0.7));
}

TEST_CASE("relative delta bars") {
  std::vector<StepRecord> recs;
  for (std::int64_t step = 0; step < 50; ++step)
    for (const char* name : {"a/kernel", "a/bias"}) {
      StepRecord r;
      r.step = step;
      r.tensor_name = name;
      r.rel_delta_raw = 1e-3 * double(step + 1);
      recs.push_back(r);
    }
  const BarPanel p = relative_delta_panel(recs, "pd");
  REQUIRE(p.groups.size() == 4);
  CHECK(p.groups[1].label.find("15") != std::string::npos);
  CHECK(p.groups[3].bars[1].second == doctest::Approx(0.046));
  const std::vector<BarPanel> panels = {p};
  const std::string svg = relative_delta_bars_svg(panels);
  CHECK(count(svg, "<rect") >= 8);
  CHECK(svg.find("1e-2") != std::string::npos);
}

TEST_CASE("plot reads CSVs and rejects empty input") {
  TempDir dir("plot");
  const RunSummary s = run(quick_config(dir / "run"));
  PlotRequest req;
  req.csvs = {s.metrics_path, s.metrics_path};
  req.highlight = 1;
  plot(req, dir / "curve.svg");
  const std::string svg = slurp(dir / "curve.svg");
  CHECK(polylines(svg).size() == 2);
  CHECK(svg.find("data-label=\"run\"") != std::string::npos);
  req.kind = parse_plot_kind("relative_delta_bars");
  plot(req, dir / "bars.svg");
  CHECK(slurp(dir / "bars.svg").find("<svg") != std::string::npos);
  CHECK_THROWS_AS(plot(PlotRequest{}, dir / "none.svg"), std::invalid_argument);
  CHECK_THROWS_AS(parse_plot_kind("pie"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Diagnostics

TEST_CASE("reduced-net gradient check through the runner") {
  const GradCheckReport r = gradcheck_reduced({});
  CHECK(r.passed());
  CHECK(r.max_rel_error() < 1e-4);
  std::ostringstream a, b;
  write_report(a, r);
  write_report(b, gradcheck_reduced({}));
  CHECK(a.str() == b.str());
  GradCheckOptions strict;
  strict.tolerance = 1e-12;
  CHECK_FALSE(gradcheck_reduced(strict).passed());
}

TEST_CASE("disproportion table") {
  DisproportionOptions o;
  const DisproportionReport r = disproportion(o);
  CHECK(r.rows.size() == 4);
  std::ostringstream os;
  write_table(os, r);
  CHECK(os.str().find("fc0/weights") != std::string::npos);
}
