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

// Experiment runner: single training runs, grid sweeps and the two
// diagnostic commands.
//
// Config files are UTF-8 text with one `key = value` per line and `#`
// comments. Keys mirror the RunConfig fields.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "percentdelta/netgraph.hpp"
#include "percentdelta/optim.hpp"

namespace pdelta {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  RuleKind optimizer = RuleKind::kPercentDelta;
  /// Unset means the optimizer's default (see default_eta).
  std::optional<double> eta;
  /// Unset means the optimizer's default (see default_decay).
  std::optional<DecayKind> decay;
  double decay_m = 1.0 / 300.0;
  double decay_beta = 0.01;
  /// Used by momentum, lars and percentdelta.
  double momentum = kDefaultMomentum;
  double eps = kDefaultEps;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  std::size_t batch_size = 100;
  std::int64_t steps = 300;
  std::int64_t eval_every = 5;
  std::uint64_t seed = 0;
  std::optional<std::size_t> train_limit = 5000;
  std::optional<std::size_t> test_limit = 1000;
  std::filesystem::path data_dir = "data/mnist-desk";
  std::filesystem::path out_dir = "runs/train";
  /// Use procedurally generated images instead of data_dir.
  bool synthetic = false;
  std::size_t synthetic_train = 600;
  std::size_t synthetic_test = 200;

  double init_stddev = 0.1;
  double init_bias = 0.1;
  /// Smoothing used for the summary's smoothed final accuracy.
  double smoothing = 0.9;
  /// A run stops as diverged once the batch loss exceeds this.
  double divergence_loss = 1e6;

  double resolved_eta() const;
  DecayKind resolved_decay() const;
  Schedule schedule() const;
  UpdateRule rule() const;

  /// Value checks only; paths are checked when a run starts. Throws
  /// ConfigError.
  void validate() const;
};

/// Per-optimizer learning rate used when eta is unset.
double default_eta(RuleKind rule);
/// Constant for adagrad and adam (they bring their own decay), clamped
/// linear otherwise.
DecayKind default_decay(RuleKind rule);

/// The full-scale protocol: batch 500, 5000 steps, evaluation every 5 steps,
/// eta 0.03 and clamped-linear decay with m = beta = 0.01 on all of MNIST.
RunConfig paper_config();

/// Sets one field from its config-file spelling. Throws ConfigError for an
/// unknown key or unparsable value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Config-file text for every field; parse_config reproduces `config`.
std::string format_config(const RunConfig& config);

enum class RunStatus { kCompleted, kDiverged };
const char* status_name(RunStatus status);

struct EvalPoint {
  std::int64_t step = 0;
  double accuracy = 0.0;
};

struct RunSummary {
  RunStatus status = RunStatus::kCompleted;
  std::int64_t steps_completed = 0;
  std::vector<EvalPoint> curve;
  std::optional<double> final_accuracy;
  std::optional<double> final_smoothed_accuracy;
  std::optional<double> best_accuracy;
  std::int64_t best_step = -1;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
  /// Divergence diagnostic; empty for completed runs.
  std::string message;
  std::filesystem::path metrics_path;
  std::filesystem::path summary_path;
};

/// Trains the MNIST conv net under `config`, writing config.txt,
/// metrics.csv and summary.txt into config.out_dir. Test accuracy is
/// measured after step s when (s + 1) % eval_every == 0 and after the last
/// step. Divergence ends the run early with status kDiverged; no row with a
/// non-finite value is ever written. Progress lines go to `log` when given.
RunSummary run(const RunConfig& config, std::ostream* log = nullptr);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

/// Parses "key=v1,v2,...".
GridAxis parse_grid_axis(const std::string& text);
/// The default learning-rate grid.
GridAxis default_eta_axis();

struct SweepCell {
  std::string name;
  RunConfig config;
  /// "completed", "diverged" or "failed".
  std::string status;
  std::string error;
  std::optional<RunSummary> summary;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  /// Argmax of final smoothed accuracy; ties go to the lower eta.
  std::optional<std::size_t> best;
  std::filesystem::path comparison_csv;
  std::filesystem::path curves_svg;
};

/// Runs the Cartesian product of `grid` over `base`, one subdirectory of
/// base.out_dir per cell, sequentially. A failing cell is recorded and the
/// sweep moves on. Writes comparison.csv, best.txt and accuracy_curves.svg.
SweepResult sweep(const RunConfig& base, const std::vector<GridAxis>& grid,
                  std::ostream* log = nullptr);

struct GradCheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double h = 1e-5;
  std::size_t batch = 4;
};

/// Finite-difference check of the reduced net with random inputs and labels
/// drawn from `seed`.
GradCheckReport gradcheck_reduced(const GradCheckOptions& options);

struct DisproportionOptions {
  std::size_t depth = 4;
  std::size_t width = 64;
  Activation activation = Activation::kSigmoid;
  double stddev = 0.1;
  std::uint64_t seed = 0;
};

DisproportionReport disproportion(const DisproportionOptions& options);
/// Fixed-width console table of the report.
void write_table(std::ostream& os, const DisproportionReport& report);

}  // namespace pdelta
