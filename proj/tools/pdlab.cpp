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

// pdlab: command-line front end over the percentdelta C API.
//
// Exit codes: 0 success, 1 usage error, 2 check failure, 3 divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "percentdelta.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheck = 2;
constexpr int kExitDiverged = 3;

void write_stdout(const char* text, size_t length, void*) {
  std::fwrite(text, 1, length, stdout);
  std::fflush(stdout);
}

int exit_code(pd_status status) {
  switch (status) {
    case PD_OK:
      return kExitOk;
    case PD_ERR_CHECK_FAILED:
      return kExitCheck;
    case PD_ERR_DIVERGED:
      return kExitDiverged;
    default:
      return kExitUsage;
  }
}

int report(pd_status status) {
  if (status != PD_OK) {
    std::fprintf(stderr, "pdlab: %s: %s\n", pd_status_name(status), pd_last_error());
  }
  return exit_code(status);
}

// Run flags kept as text; the library parses and validates them.
struct RunFlags {
  std::optional<std::string> config;
  std::vector<std::pair<std::string, std::optional<std::string>>> values = {
      {"out_dir", {}},   {"data_dir", {}},   {"seed", {}},        {"optimizer", {}},
      {"eta", {}},       {"decay", {}},      {"decay_m", {}},     {"decay_beta", {}},
      {"momentum", {}},  {"batch_size", {}}, {"steps", {}},       {"eval_every", {}},
      {"train_limit", {}}, {"test_limit", {}}};
  bool synthetic = false;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file applied before other flags")
        ->check(CLI::ExistingFile);
    for (auto& [key, value] : values) {
      std::string flag = "--" + key;
      for (char& c : flag) {
        if (c == '_') c = '-';
      }
      app->add_option(flag, value, "sets '" + key + "'");
    }
    app->add_flag("--synthetic", synthetic, "use procedurally generated images");
    app->add_option("--set", sets, "extra KEY=VALUE config setting (repeatable)");
  }

  pd_status build(pd_config** out) const {
    pd_status st = pd_config_create(out);
    if (st != PD_OK) return st;
    if (config && (st = pd_config_load(*out, config->c_str())) != PD_OK) return st;
    for (const auto& [key, value] : values) {
      if (value && (st = pd_config_set(*out, key.c_str(), value->c_str())) != PD_OK) return st;
    }
    if (synthetic && (st = pd_config_set(*out, "synthetic", "true")) != PD_OK) return st;
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "pdlab: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
        return PD_ERR_CONFIG;
      }
      st = pd_config_set(*out, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
      if (st != PD_OK) return st;
    }
    return pd_config_validate(*out);
  }
};

struct ConfigHandle {
  pd_config* ptr = nullptr;
  ~ConfigHandle() { pd_config_destroy(ptr); }
};

std::string fmt_opt(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_train(const RunFlags& flags) {
  ConfigHandle cfg;
  pd_status st = flags.build(&cfg.ptr);
  if (st != PD_OK) return report(st);
  pd_run_summary s{};
  st = pd_train(cfg.ptr, &s, write_stdout, nullptr);
  if (st == PD_OK || st == PD_ERR_DIVERGED) {
    std::printf("%s after %lld steps: final accuracy %s, best %s (step %lld), %.1f s\n",
                s.diverged ? "diverged" : "completed", static_cast<long long>(s.steps_completed),
                fmt_opt(s.final_accuracy).c_str(), fmt_opt(s.best_accuracy).c_str(),
                static_cast<long long>(s.best_step), s.wall_seconds);
  }
  return report(st);
}

int cmd_sweep(const RunFlags& flags, const std::vector<std::string>& grid) {
  ConfigHandle cfg;
  pd_status st = flags.build(&cfg.ptr);
  if (st != PD_OK) return report(st);
  std::vector<const char*> axes;
  for (const std::string& g : grid) axes.push_back(g.c_str());
  pd_sweep_summary s{};
  st = pd_sweep(cfg.ptr, axes.data(), axes.size(), &s, write_stdout, nullptr);
  if (st == PD_OK) {
    std::printf("sweep: %zu cells, %zu completed, %zu diverged, %zu failed\n", s.cells,
                s.completed, s.diverged, s.failed);
  }
  return report(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PercentDelta experiment harness"};
  app.require_subcommand(1);

  RunFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train the MNIST conv net once");
  train_flags.attach(train);

  RunFlags sweep_flags;
  std::vector<std::string> grid;
  CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over config keys");
  sweep_flags.attach(sweep);
  sweep->add_option("--grid", grid,
                    "axis KEY=V1,V2,... (repeatable; default eta=0.001,0.003,0.01,0.03,0.1)");

  std::vector<std::string> csvs;
  std::vector<std::string> labels;
  std::string kind = "accuracy_curve";
  std::string plot_out_dir = ".";
  std::optional<std::string> plot_out;
  std::optional<std::string> title;
  double smoothing = 0.9;
  double y_min = std::numeric_limits<double>::quiet_NaN();
  double x_max = std::numeric_limits<double>::quiet_NaN();
  int64_t stride = 15;
  size_t groups = 4;
  int64_t highlight = -1;
  CLI::App* plot = app.add_subcommand("plot", "SVG chart from metrics CSVs");
  plot->add_option("csv", csvs, "metrics CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--kind", kind, "accuracy_curve or relative_delta_bars");
  plot->add_option("--out", plot_out, "output SVG path (default OUT_DIR/KIND.svg)");
  plot->add_option("--out-dir", plot_out_dir, "directory for the default output name");
  plot->add_option("--labels", labels, "one label per CSV");
  plot->add_option("--smoothing", smoothing, "exponential smoothing factor in [0, 1)");
  plot->add_option("--y-min", y_min, "lower end of the y axis (e.g. 0.5)");
  plot->add_option("--x-max", x_max, "last step to draw");
  plot->add_option("--stride", stride, "bar chart step stride");
  plot->add_option("--groups", groups, "bar chart step groups");
  plot->add_option("--highlight", highlight, "index of the CSV drawn in red");
  plot->add_option("--title", title, "chart title");

  uint64_t gc_seed = 0;
  double tolerance = 1e-4;
  double h = 1e-5;
  std::optional<std::string> gc_out_dir;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check, reduced net");
  gradcheck->add_option("--seed", gc_seed, "seed for weights and inputs");
  gradcheck->add_option("--tolerance", tolerance, "largest accepted relative error");
  gradcheck->add_option("--fd-step", h, "central-difference step h");
  gradcheck->add_option("--out-dir", gc_out_dir, "also write gradcheck_report.txt here");

  size_t depth = 4;
  size_t width = 64;
  std::string activation = "sigmoid";
  double stddev = 0.1;
  uint64_t dp_seed = 0;
  std::string dp_out_dir = ".";
  CLI::App* disp = app.add_subcommand("disproportion", "per-layer gradient magnitudes at init");
  disp->add_option("--depth", depth, "dense layers");
  disp->add_option("--width", width, "units per layer");
  disp->add_option("--activation", activation, "sigmoid or relu");
  disp->add_option("--stddev", stddev, "weight init standard deviation");
  disp->add_option("--seed", dp_seed, "seed");
  disp->add_option("--out-dir", dp_out_dir, "directory for disproportion_ACTIVATION.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (train->parsed()) return cmd_train(train_flags);
  if (sweep->parsed()) return cmd_sweep(sweep_flags, grid);
  if (plot->parsed()) {
    pd_plot_options opts;
    pd_plot_options_init(&opts);
    opts.kind = kind.c_str();
    opts.smoothing = smoothing;
    opts.y_min = y_min;
    opts.x_max = x_max;
    opts.bar_stride = stride;
    opts.bar_groups = groups;
    opts.highlight = highlight;
    if (title) opts.title = title->c_str();
    std::vector<const char*> paths, names;
    for (const auto& c : csvs) paths.push_back(c.c_str());
    for (const auto& l : labels) names.push_back(l.c_str());
    if (!labels.empty() && labels.size() != csvs.size()) {
      std::fprintf(stderr, "pdlab: %zu labels for %zu CSVs\n", labels.size(), csvs.size());
      return kExitUsage;
    }
    const std::string out = plot_out ? *plot_out : (std::filesystem::path(plot_out_dir) /
                                                    (kind + ".svg")).string();
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(out).parent_path(), ec);
    const pd_status st = pd_plot(paths.data(), labels.empty() ? nullptr : names.data(),
                                 paths.size(), out.c_str(), &opts);
    if (st == PD_OK) std::printf("wrote %s\n", out.c_str());
    return report(st);
  }
  if (gradcheck->parsed()) {
    std::string text;
    pd_gradcheck_result r{};
    const pd_status st = pd_gradcheck(
        gc_seed, tolerance, h, &r,
        [](const char* s, size_t n, void* user) { static_cast<std::string*>(user)->append(s, n); },
        &text);
    std::fwrite(text.data(), 1, text.size(), stdout);
    if (gc_out_dir && (st == PD_OK || st == PD_ERR_CHECK_FAILED)) {
      std::filesystem::create_directories(*gc_out_dir);
      const auto path = std::filesystem::path(*gc_out_dir) / "gradcheck_report.txt";
      if (std::FILE* f = std::fopen(path.c_str(), "wb")) {
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
      } else {
        std::fprintf(stderr, "pdlab: cannot write %s\n", path.c_str());
        return kExitUsage;
      }
    }
    return report(st);
  }
  if (disp->parsed()) {
    std::error_code ec;
    std::filesystem::create_directories(dp_out_dir, ec);
    const std::string csv =
        (std::filesystem::path(dp_out_dir) / ("disproportion_" + activation + ".csv")).string();
    pd_disproportion_result r{};
    const pd_status st = pd_disproportion(depth, width, activation.c_str(), stddev, dp_seed,
                                          csv.c_str(), &r, write_stdout, nullptr);
    if (st == PD_OK) std::printf("wrote %s\n", csv.c_str());
    return report(st);
  }
  return kExitUsage;
}
