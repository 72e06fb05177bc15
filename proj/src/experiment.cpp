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

#include "percentdelta/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "percentdelta/metrics.hpp"
#include "percentdelta/mnist.hpp"
#include "percentdelta/plot.hpp"
#include "percentdelta/rng.hpp"

namespace pdelta {

namespace {

// Training allocates and frees the same multi-megabyte tensors every step.
// Keeping freed blocks in the heap instead of returning them to the kernel
// avoids re-faulting those pages each time.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_f64(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::optional<std::size_t> parse_limit(const std::string& key, const std::string& v) {
  if (v == "all" || v == "none") return std::nullopt;
  return parse_u64(key, v);
}

std::string limit_text(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "all";
}

std::string opt_text(const std::optional<double>& v) {
  return v ? format_double(*v) : "";
}

bool all_finite(const StepRecord& r) {
  for (double v : {r.l1_w, r.l1_delta_raw, r.l1_delta_applied, r.rel_delta_raw,
                   r.rel_delta_applied, r.mean_rel_delta_raw, r.multiplier, r.gamma}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f.flush()) throw std::runtime_error("cannot write " + path.string());
}

std::string summary_text(const RunConfig& c, const RunSummary& s) {
  std::ostringstream os;
  os << "status: " << status_name(s.status) << '\n'
     << "optimizer: " << rule_name(c.optimizer) << '\n'
     << "eta: " << format_double(c.resolved_eta()) << '\n'
     << "decay: " << decay_name(c.resolved_decay()) << '\n'
     << "steps_completed: " << s.steps_completed << '\n'
     << "final_loss: " << format_double(s.final_loss) << '\n'
     << "final_accuracy: " << opt_text(s.final_accuracy) << '\n'
     << "final_smoothed_accuracy: " << opt_text(s.final_smoothed_accuracy) << '\n'
     << "best_accuracy: " << opt_text(s.best_accuracy) << '\n'
     << "best_step: " << s.best_step << '\n'
     << "wall_seconds: " << format_double(s.wall_seconds) << '\n';
  if (!s.message.empty()) os << "message: " << s.message << '\n';
  return os.str();
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '.' || c == '-' || c == '+';
    out += keep ? c : '-';
  }
  return out;
}

}  // namespace

double default_eta(RuleKind rule) {
  switch (rule) {
    case RuleKind::kSgd:
      return 0.01;
    case RuleKind::kMomentum:
      return 0.001;
    case RuleKind::kAdaGrad:
      return 0.01;
    case RuleKind::kAdam:
      return 0.001;
    case RuleKind::kLars:
      return 0.03;
    case RuleKind::kPercentDelta:
      return 0.03;
  }
  return 0.03;
}

DecayKind default_decay(RuleKind rule) {
  return rule == RuleKind::kAdaGrad || rule == RuleKind::kAdam ? DecayKind::kConstant
                                                               : DecayKind::kClampedLinear;
}

double RunConfig::resolved_eta() const { return eta ? *eta : default_eta(optimizer); }

DecayKind RunConfig::resolved_decay() const { return decay ? *decay : default_decay(optimizer); }

Schedule RunConfig::schedule() const {
  Schedule s;
  s.eta = resolved_eta();
  s.kind = resolved_decay();
  s.m = decay_m;
  s.beta = decay_beta;
  return s;
}

UpdateRule RunConfig::rule() const {
  UpdateRule r;
  r.kind = optimizer;
  r.mu = optimizer == RuleKind::kMomentum || optimizer == RuleKind::kLars ||
                 optimizer == RuleKind::kPercentDelta
             ? momentum
             : 0.0;
  r.eps = eps;
  r.beta1 = adam_beta1;
  r.beta2 = adam_beta2;
  return r;
}

void RunConfig::validate() const {
  try {
    schedule().validate();
    rule().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (steps < 1) throw ConfigError("config: steps must be >= 1");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (train_limit && *train_limit == 0) throw ConfigError("config: train_limit must be >= 1");
  if (test_limit && *test_limit == 0) throw ConfigError("config: test_limit must be >= 1");
  if (synthetic && (synthetic_train == 0 || synthetic_test == 0)) {
    throw ConfigError("config: synthetic_train and synthetic_test must be >= 1");
  }
  if (!(init_stddev > 0.0)) throw ConfigError("config: init_stddev must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw ConfigError("config: smoothing must lie in [0, 1)");
  }
  if (!(divergence_loss > 0.0)) throw ConfigError("config: divergence_loss must be positive");
  if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
}

RunConfig paper_config() {
  RunConfig c;
  c.optimizer = RuleKind::kPercentDelta;
  c.eta = 0.03;
  c.decay = DecayKind::kClampedLinear;
  c.decay_m = 0.01;
  c.decay_beta = 0.01;
  c.momentum = kDefaultMomentum;
  c.batch_size = 500;
  c.steps = 5000;
  c.eval_every = 5;
  c.train_limit = std::nullopt;
  c.test_limit = std::nullopt;
  c.data_dir = "data/mnist";
  c.out_dir = "runs/paper";
  return c;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  try {
    if (key == "optimizer") {
      c.optimizer = parse_rule(v);
    } else if (key == "eta") {
      c.eta = v == "auto" ? std::nullopt : std::optional<double>(parse_f64(key, v));
    } else if (key == "decay") {
      c.decay = v == "auto" ? std::nullopt : std::optional<DecayKind>(parse_decay(v));
    } else if (key == "decay_m") {
      c.decay_m = parse_f64(key, v);
    } else if (key == "decay_beta") {
      c.decay_beta = parse_f64(key, v);
    } else if (key == "momentum") {
      c.momentum = parse_f64(key, v);
    } else if (key == "eps") {
      c.eps = parse_f64(key, v);
    } else if (key == "adam_beta1") {
      c.adam_beta1 = parse_f64(key, v);
    } else if (key == "adam_beta2") {
      c.adam_beta2 = parse_f64(key, v);
    } else if (key == "batch_size") {
      c.batch_size = parse_u64(key, v);
    } else if (key == "steps") {
      c.steps = static_cast<std::int64_t>(parse_u64(key, v));
    } else if (key == "eval_every") {
      c.eval_every = static_cast<std::int64_t>(parse_u64(key, v));
    } else if (key == "seed") {
      c.seed = parse_u64(key, v);
    } else if (key == "train_limit") {
      c.train_limit = parse_limit(key, v);
    } else if (key == "test_limit") {
      c.test_limit = parse_limit(key, v);
    } else if (key == "data_dir") {
      c.data_dir = v;
    } else if (key == "out_dir") {
      c.out_dir = v;
    } else if (key == "synthetic") {
      c.synthetic = parse_bool(key, v);
    } else if (key == "synthetic_train") {
      c.synthetic_train = parse_u64(key, v);
    } else if (key == "synthetic_test") {
      c.synthetic_test = parse_u64(key, v);
    } else if (key == "init_stddev") {
      c.init_stddev = parse_f64(key, v);
    } else if (key == "init_bias") {
      c.init_bias = parse_f64(key, v);
    } else if (key == "smoothing") {
      c.smoothing = parse_f64(key, v);
    } else if (key == "divergence_loss") {
      c.divergence_loss = parse_f64(key, v);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os << "optimizer = " << rule_name(c.optimizer) << '\n'
     << "eta = " << (c.eta ? format_double(*c.eta) : "auto") << '\n'
     << "decay = " << (c.decay ? decay_name(*c.decay) : "auto") << '\n'
     << "decay_m = " << format_double(c.decay_m) << '\n'
     << "decay_beta = " << format_double(c.decay_beta) << '\n'
     << "momentum = " << format_double(c.momentum) << '\n'
     << "eps = " << format_double(c.eps) << '\n'
     << "adam_beta1 = " << format_double(c.adam_beta1) << '\n'
     << "adam_beta2 = " << format_double(c.adam_beta2) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "steps = " << c.steps << '\n'
     << "eval_every = " << c.eval_every << '\n'
     << "seed = " << c.seed << '\n'
     << "train_limit = " << limit_text(c.train_limit) << '\n'
     << "test_limit = " << limit_text(c.test_limit) << '\n'
     << "data_dir = " << c.data_dir.string() << '\n'
     << "out_dir = " << c.out_dir.string() << '\n'
     << "synthetic = " << (c.synthetic ? "true" : "false") << '\n'
     << "synthetic_train = " << c.synthetic_train << '\n'
     << "synthetic_test = " << c.synthetic_test << '\n'
     << "init_stddev = " << format_double(c.init_stddev) << '\n'
     << "init_bias = " << format_double(c.init_bias) << '\n'
     << "smoothing = " << format_double(c.smoothing) << '\n'
     << "divergence_loss = " << format_double(c.divergence_loss) << '\n';
  return os.str();
}

const char* status_name(RunStatus status) {
  return status == RunStatus::kCompleted ? "completed" : "diverged";
}

RunSummary run(const RunConfig& config, std::ostream* log) {
  tune_allocator();
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  Dataset train;
  Dataset test;
  if (config.synthetic) {
    train = synthetic(config.synthetic_train, Rng::derive(config.seed, 0x7A1).next());
    test = synthetic(config.synthetic_test, Rng::derive(config.seed, 0x7E5).next());
  } else {
    if (!std::filesystem::is_directory(config.data_dir)) {
      throw ConfigError("data_dir " + config.data_dir.string() +
                        " is not a directory (use tools/fetch_mnist.sh or --synthetic)");
    }
    train = load_mnist(config.data_dir, Split::kTrain, config.train_limit);
    test = load_mnist(config.data_dir, Split::kTest, config.test_limit);
  }
  if (config.batch_size > train.size()) {
    throw ConfigError("config: batch_size " + std::to_string(config.batch_size) +
                      " exceeds the " + std::to_string(train.size()) + " training examples");
  }

  std::filesystem::create_directories(config.out_dir);
  write_text(config.out_dir / "config.txt", format_config(config));

  Network net = build_mnist_net();
  init(net, InitPolicy{config.init_stddev, config.init_bias, config.seed});
  OptimizerState state = OptimizerState::for_network(net);
  const UpdateRule rule = config.rule();
  const Schedule schedule = config.schedule();

  RunSummary summary;
  summary.metrics_path = config.out_dir / "metrics.csv";
  summary.summary_path = config.out_dir / "summary.txt";
  MetricsSink sink(summary.metrics_path);

  const std::uint64_t shuffle_seed = Rng::derive(config.seed, 0xBA7).next();
  std::uint64_t epoch = 0;
  std::vector<std::vector<std::size_t>> order =
      batches(train.size(), config.batch_size, shuffle_seed, epoch);
  std::size_t next_batch = 0;
  std::vector<double> accuracies;

  for (std::int64_t s = 0; s < config.steps; ++s) {
    if (next_batch == order.size()) {
      order = batches(train.size(), config.batch_size, shuffle_seed, ++epoch);
      next_batch = 0;
    }
    const auto [x, y] = train.gather(order[next_batch++]);
    const ForwardCache cache = net.forward(x, y);
    if (!std::isfinite(cache.loss) || cache.loss > config.divergence_loss) {
      summary.status = RunStatus::kDiverged;
      summary.message = "loss " + format_double(cache.loss) + " at step " + std::to_string(s) +
                        " (limit " + format_double(config.divergence_loss) + ")";
      break;
    }
    net.backward(cache);
    std::vector<StepRecord> records = step(rule, state, net, schedule);
    const auto bad = std::find_if(records.begin(), records.end(),
                                  [](const StepRecord& r) { return !all_finite(r); });
    if (bad != records.end()) {
      summary.status = RunStatus::kDiverged;
      summary.message = "non-finite update statistics for " + bad->tensor_name + " at step " +
                        std::to_string(s);
      break;
    }
    for (StepRecord& r : records) r.loss = cache.loss;
    const bool eval = (s + 1) % config.eval_every == 0 || s + 1 == config.steps;
    if (eval) {
      const double acc = net.accuracy(test.images, test.labels);
      for (StepRecord& r : records) r.test_accuracy = acc;
      summary.curve.push_back({s, acc});
      accuracies.push_back(acc);
      if (!summary.best_accuracy || acc > *summary.best_accuracy) {
        summary.best_accuracy = acc;
        summary.best_step = s;
      }
      if (log) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "step %5lld  loss %.5f  test_accuracy %.4f\n",
                      static_cast<long long>(s), cache.loss, acc);
        *log << buf << std::flush;
      }
    }
    sink.write(records);
    summary.steps_completed = s + 1;
    summary.final_loss = cache.loss;
  }

  if (!accuracies.empty()) {
    summary.final_accuracy = accuracies.back();
    summary.final_smoothed_accuracy = smooth(accuracies, config.smoothing).back();
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (log && summary.status == RunStatus::kDiverged) {
    *log << "diverged: " << summary.message << '\n';
  }
  write_text(summary.summary_path, summary_text(config, summary));
  return summary;
}

GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("grid axis '" + text + "': expected key=v1,v2,...");
  }
  GridAxis axis{trim(text.substr(0, eq)), {}};
  std::stringstream rest(text.substr(eq + 1));
  std::string v;
  while (std::getline(rest, v, ',')) {
    v = trim(v);
    if (!v.empty()) axis.values.push_back(v);
  }
  if (axis.values.empty()) throw ConfigError("grid axis '" + axis.key + "' has no values");
  return axis;
}

GridAxis default_eta_axis() { return {"eta", {"0.001", "0.003", "0.01", "0.03", "0.1"}}; }

SweepResult sweep(const RunConfig& base, const std::vector<GridAxis>& grid_in,
                  std::ostream* log) {
  std::vector<GridAxis> grid = grid_in.empty() ? std::vector{default_eta_axis()} : grid_in;
  for (const GridAxis& axis : grid) {
    if (axis.values.empty()) throw ConfigError("grid axis '" + axis.key + "' has no values");
    if (axis.key == "out_dir") throw ConfigError("grid axis 'out_dir' is not allowed");
  }

  // Build and validate every cell before running any of them.
  SweepResult result;
  std::vector<std::size_t> idx(grid.size(), 0);
  for (;;) {
    SweepCell cell;
    cell.config = base;
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "c%02zu", result.cells.size());
    cell.name = prefix;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const std::string& value = grid[a].values[idx[a]];
      set_config_value(cell.config, grid[a].key, value);
      cell.name += "_" + sanitize(grid[a].key) + "-" + sanitize(value);
    }
    cell.config.out_dir = base.out_dir / cell.name;
    cell.config.validate();
    result.cells.push_back(std::move(cell));
    std::size_t a = grid.size();
    while (a > 0 && ++idx[a - 1] == grid[a - 1].values.size()) idx[--a] = 0;
    if (a == 0) break;
  }

  std::filesystem::create_directories(base.out_dir);
  for (SweepCell& cell : result.cells) {
    if (log) *log << "== " << cell.name << '\n' << std::flush;
    try {
      cell.summary = run(cell.config, log);
      cell.status = status_name(cell.summary->status);
      cell.error = cell.summary->message;
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.error = e.what();
      std::filesystem::create_directories(cell.config.out_dir);
      write_text(cell.config.out_dir / "error.txt", cell.error + "\n");
      if (log) *log << "failed: " << cell.error << '\n';
    }
  }

  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const SweepCell& c = result.cells[i];
    if (c.status != "completed" || !c.summary->final_smoothed_accuracy) continue;
    if (!result.best) {
      result.best = i;
      continue;
    }
    const SweepCell& b = result.cells[*result.best];
    const double acc = *c.summary->final_smoothed_accuracy;
    const double best_acc = *b.summary->final_smoothed_accuracy;
    if (acc > best_acc ||
        (acc == best_acc && c.config.resolved_eta() < b.config.resolved_eta())) {
      result.best = i;
    }
  }

  std::ostringstream csv;
  csv << "cell,optimizer,eta,status,best,step,test_accuracy,smoothed_accuracy\n";
  std::vector<Series> series;
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const SweepCell& c = result.cells[i];
    const std::string head = c.name + "," + rule_name(c.config.optimizer) + "," +
                             format_double(c.config.resolved_eta()) + "," + c.status + "," +
                             (result.best == i ? "1" : "0") + ",";
    if (!c.summary || c.summary->curve.empty()) {
      csv << head << ",,\n";
      continue;
    }
    Series s{c.name, {}, {}, result.best == i};
    for (const EvalPoint& p : c.summary->curve) {
      s.x.push_back(static_cast<double>(p.step));
      s.y.push_back(p.accuracy);
    }
    const std::vector<double> smoothed = smooth(s.y, base.smoothing);
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      csv << head << c.summary->curve[k].step << ',' << format_double(s.y[k]) << ','
          << format_double(smoothed[k]) << '\n';
    }
    series.push_back(std::move(s));
  }
  result.comparison_csv = base.out_dir / "comparison.csv";
  write_text(result.comparison_csv, csv.str());

  std::ostringstream best;
  if (result.best) {
    const SweepCell& b = result.cells[*result.best];
    best << "best_cell: " << b.name << '\n'
         << "optimizer: " << rule_name(b.config.optimizer) << '\n'
         << "eta: " << format_double(b.config.resolved_eta()) << '\n'
         << "final_smoothed_accuracy: " << format_double(*b.summary->final_smoothed_accuracy)
         << '\n';
  } else {
    best << "best_cell: none (no cell completed)\n";
  }
  write_text(base.out_dir / "best.txt", best.str());

  result.curves_svg = base.out_dir / "accuracy_curves.svg";
  if (!series.empty()) {
    CurveOptions smoothed;
    smoothed.smoothing = base.smoothing;
    smoothed.title = "Test accuracy (smoothed " + format_double(base.smoothing) + ")";
    write_text(result.curves_svg, accuracy_curve_svg(series, smoothed));
    CurveOptions raw;
    raw.smoothing = 0.0;
    raw.title = "Test accuracy (raw)";
    write_text(base.out_dir / "accuracy_curves_raw.svg", accuracy_curve_svg(series, raw));
    raw.y_min = 0.5;
    raw.title = "Test accuracy (raw, from 0.5)";
    write_text(base.out_dir / "accuracy_curves_early.svg", accuracy_curve_svg(series, raw));
  }
  if (log && result.best) *log << "best: " << result.cells[*result.best].name << '\n';
  return result;
}

GradCheckReport gradcheck_reduced(const GradCheckOptions& options) {
  Network net = build_reduced_net();
  init(net, InitPolicy{0.1, 0.1, options.seed});
  Rng rng = Rng::derive(options.seed, 0x6C);
  Shape shape{options.batch};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  Tensor inputs(shape);
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i] = rng.uniform();
  std::vector<int> labels(options.batch);
  const std::size_t classes = net.output_shape()[0];
  for (int& l : labels) l = static_cast<int>(rng.below(classes));
  return grad_check(net, inputs, labels, options.h, options.tolerance);
}

DisproportionReport disproportion(const DisproportionOptions& options) {
  return disproportion_report(options.depth, options.width, options.activation, options.stddev,
                              options.seed);
}

void write_table(std::ostream& os, const DisproportionReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "dense chain: depth %zu, width %zu, %s\n", report.depth,
                report.width, activation_name(report.activation));
  os << buf;
  std::snprintf(buf, sizeof buf, "%-6s %-14s %14s %18s %14s\n", "layer", "tensor", "l1_grad",
                "l1_grad_per_entry", "ratio_to_last");
  os << buf;
  for (const DisproportionRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-6zu %-14s %14.6e %18.6e %14.6e\n", r.layer_index,
                  r.tensor_name.c_str(), r.l1_grad, r.l1_grad_per_entry, r.ratio_to_last);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "earliest/latest: %.6e  spread: %.6e\n",
                report.earliest_over_latest, report.spread);
  os << buf;
}

}  // namespace pdelta
