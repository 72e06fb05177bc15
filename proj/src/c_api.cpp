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

#include "percentdelta.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <ostream>
#include <sstream>
#include <streambuf>
#include <string>

#include "percentdelta/experiment.hpp"
#include "percentdelta/mnist.hpp"
#include "percentdelta/netgraph.hpp"
#include "percentdelta/optim.hpp"
#include "percentdelta/plot.hpp"

struct pd_config {
  pdelta::RunConfig config;
};

struct pd_network {
  pdelta::Network net;
};

struct pd_optimizer {
  pdelta::UpdateRule rule;
  pdelta::Schedule schedule;
  pdelta::OptimizerState state;
};

namespace {

std::string& last_error() {
  thread_local std::string message;
  return message;
}

pd_status fail(pd_status status, const std::string& message) {
  last_error() = message;
  return status;
}

// Status for a thrown exception; most specific types first.
template <typename F>
pd_status guarded(F&& body) {
  last_error().clear();
  try {
    return body();
  } catch (const pdelta::ConfigError& e) {
    return fail(PD_ERR_CONFIG, e.what());
  } catch (const pdelta::IdxError& e) {
    return fail(PD_ERR_DATA, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(PD_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(PD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(PD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PD_ERR_INTERNAL, "out of memory");
  } catch (const std::runtime_error& e) {
    return fail(PD_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(PD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PD_ERR_INTERNAL, "unknown error");
  }
}

#define PD_REQUIRE(cond, what)                                     \
  do {                                                             \
    if (!(cond)) return fail(PD_ERR_INVALID_ARGUMENT, (what));     \
  } while (0)

// Forwards everything written to it to a pd_write_fn.
class CallbackBuf : public std::streambuf {
 public:
  CallbackBuf(pd_write_fn fn, void* user) : fn_(fn), user_(user) {}

 protected:
  int_type overflow(int_type ch) override {
    if (ch != traits_type::eof()) {
      const char c = traits_type::to_char_type(ch);
      fn_(&c, 1, user_);
    }
    return ch;
  }
  std::streamsize xsputn(const char* s, std::streamsize n) override {
    fn_(s, static_cast<std::size_t>(n), user_);
    return n;
  }

 private:
  pd_write_fn fn_;
  void* user_;
};

struct CallbackStream {
  CallbackStream(pd_write_fn fn, void* user) : buf(fn, user), os(&buf) {}
  CallbackBuf buf;
  std::ostream os;
};

std::unique_ptr<CallbackStream> make_stream(pd_write_fn fn, void* user) {
  return fn ? std::make_unique<CallbackStream>(fn, user) : nullptr;
}

double or_nan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

extern "C" {

const char* pd_status_name(pd_status status) {
  switch (status) {
    case PD_OK:
      return "ok";
    case PD_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case PD_ERR_CONFIG:
      return "config";
    case PD_ERR_IO:
      return "io";
    case PD_ERR_DATA:
      return "data";
    case PD_ERR_DIVERGED:
      return "diverged";
    case PD_ERR_CHECK_FAILED:
      return "check_failed";
    case PD_ERR_BUFFER_TOO_SMALL:
      return "buffer_too_small";
    case PD_ERR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

const char* pd_last_error(void) { return last_error().c_str(); }

const char* pd_version(void) { return "1.0.0"; }

pd_status pd_config_create(pd_config** out) {
  PD_REQUIRE(out, "pd_config_create: out is NULL");
  return guarded([&] {
    *out = new pd_config{};
    return PD_OK;
  });
}

void pd_config_destroy(pd_config* config) { delete config; }

pd_status pd_config_load(pd_config* config, const char* path) {
  PD_REQUIRE(config && path, "pd_config_load: NULL argument");
  return guarded([&] {
    config->config = pdelta::load_config(path, config->config);
    return PD_OK;
  });
}

pd_status pd_config_set(pd_config* config, const char* key, const char* value) {
  PD_REQUIRE(config && key && value, "pd_config_set: NULL argument");
  return guarded([&] {
    pdelta::set_config_value(config->config, key, value);
    return PD_OK;
  });
}

pd_status pd_config_format(const pd_config* config, char* buffer, size_t size, size_t* needed) {
  PD_REQUIRE(config, "pd_config_format: config is NULL");
  return guarded([&] {
    const std::string text = pdelta::format_config(config->config);
    if (needed) *needed = text.size() + 1;
    if (!buffer || size < text.size() + 1) {
      return fail(PD_ERR_BUFFER_TOO_SMALL,
                  "pd_config_format: need " + std::to_string(text.size() + 1) + " bytes");
    }
    std::memcpy(buffer, text.c_str(), text.size() + 1);
    return PD_OK;
  });
}

pd_status pd_config_validate(const pd_config* config) {
  PD_REQUIRE(config, "pd_config_validate: config is NULL");
  return guarded([&] {
    config->config.validate();
    return PD_OK;
  });
}

pd_status pd_train(const pd_config* config, pd_run_summary* summary, pd_write_fn log,
                   void* user) {
  PD_REQUIRE(config, "pd_train: config is NULL");
  return guarded([&] {
    auto stream = make_stream(log, user);
    const pdelta::RunSummary s = pdelta::run(config->config, stream ? &stream->os : nullptr);
    if (summary) {
      summary->diverged = s.status == pdelta::RunStatus::kDiverged;
      summary->steps_completed = s.steps_completed;
      summary->final_accuracy = or_nan(s.final_accuracy);
      summary->final_smoothed_accuracy = or_nan(s.final_smoothed_accuracy);
      summary->best_accuracy = or_nan(s.best_accuracy);
      summary->best_step = s.best_step;
      summary->final_loss = s.final_loss;
      summary->wall_seconds = s.wall_seconds;
    }
    if (s.status == pdelta::RunStatus::kDiverged) return fail(PD_ERR_DIVERGED, s.message);
    return PD_OK;
  });
}

pd_status pd_sweep(const pd_config* base, const char* const* axes, size_t count,
                   pd_sweep_summary* summary, pd_write_fn log, void* user) {
  PD_REQUIRE(base, "pd_sweep: base config is NULL");
  PD_REQUIRE(count == 0 || axes, "pd_sweep: axes is NULL");
  return guarded([&] {
    std::vector<pdelta::GridAxis> grid;
    for (size_t i = 0; i < count; ++i) {
      PD_REQUIRE(axes[i], "pd_sweep: NULL axis");
      grid.push_back(pdelta::parse_grid_axis(axes[i]));
    }
    auto stream = make_stream(log, user);
    const pdelta::SweepResult r =
        pdelta::sweep(base->config, grid, stream ? &stream->os : nullptr);
    if (summary) {
      *summary = pd_sweep_summary{r.cells.size(), 0, 0, 0, -1};
      for (const auto& c : r.cells) {
        if (c.status == "completed") ++summary->completed;
        if (c.status == "diverged") ++summary->diverged;
        if (c.status == "failed") ++summary->failed;
      }
      if (r.best) summary->best_cell = static_cast<int64_t>(*r.best);
    }
    return PD_OK;
  });
}

void pd_plot_options_init(pd_plot_options* options) {
  if (!options) return;
  options->kind = "accuracy_curve";
  options->smoothing = pdelta::kDefaultSmoothing;
  options->y_min = std::numeric_limits<double>::quiet_NaN();
  options->x_max = std::numeric_limits<double>::quiet_NaN();
  options->bar_stride = 15;
  options->bar_groups = 4;
  options->title = nullptr;
  options->highlight = -1;
}

pd_status pd_plot(const char* const* csv_paths, const char* const* labels, size_t count,
                  const char* out_svg, const pd_plot_options* options) {
  PD_REQUIRE(out_svg && options && options->kind, "pd_plot: NULL argument");
  PD_REQUIRE(count == 0 || csv_paths, "pd_plot: csv_paths is NULL");
  return guarded([&] {
    pdelta::PlotRequest req;
    req.kind = pdelta::parse_plot_kind(options->kind);
    for (size_t i = 0; i < count; ++i) {
      PD_REQUIRE(csv_paths[i], "pd_plot: NULL path");
      req.csvs.emplace_back(csv_paths[i]);
      if (labels) req.labels.emplace_back(labels[i] ? labels[i] : "");
    }
    if (options->highlight >= 0) req.highlight = static_cast<size_t>(options->highlight);
    req.curve.smoothing = options->smoothing;
    if (!std::isnan(options->y_min)) req.curve.y_min = options->y_min;
    if (!std::isnan(options->x_max)) req.curve.x_max = options->x_max;
    if (options->title) req.curve.title = options->title;
    req.bar_stride = options->bar_stride;
    req.bar_groups = options->bar_groups;
    pdelta::plot(req, out_svg);
    return PD_OK;
  });
}

pd_status pd_gradcheck(uint64_t seed, double tolerance, double h, pd_gradcheck_result* result,
                       pd_write_fn report, void* user) {
  PD_REQUIRE(tolerance >= 0.0 && h > 0.0, "pd_gradcheck: need tolerance >= 0 and h > 0");
  return guarded([&] {
    pdelta::GradCheckOptions opts;
    opts.seed = seed;
    opts.tolerance = tolerance;
    opts.h = h;
    const pdelta::GradCheckReport r = pdelta::gradcheck_reduced(opts);
    if (report) {
      std::ostringstream os;
      pdelta::write_report(os, r);
      const std::string text = os.str();
      report(text.data(), text.size(), user);
    }
    if (result) {
      *result = pd_gradcheck_result{r.checked, r.flagged.size(), r.max_rel_error(), r.passed()};
    }
    if (!r.passed()) {
      return fail(PD_ERR_CHECK_FAILED, std::to_string(r.flagged.size()) + " of " +
                                           std::to_string(r.checked) +
                                           " entries at or above tolerance");
    }
    return PD_OK;
  });
}

pd_status pd_disproportion(size_t depth, size_t width, const char* activation, double stddev,
                           uint64_t seed, const char* csv_path, pd_disproportion_result* result,
                           pd_write_fn table, void* user) {
  PD_REQUIRE(activation, "pd_disproportion: activation is NULL");
  return guarded([&] {
    pdelta::DisproportionOptions opts;
    opts.depth = depth;
    opts.width = width;
    opts.activation = pdelta::parse_activation(activation);
    opts.stddev = stddev;
    opts.seed = seed;
    const pdelta::DisproportionReport r = pdelta::disproportion(opts);
    if (csv_path) {
      std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
      pdelta::write_csv(f, r);
      if (!f.flush()) return fail(PD_ERR_IO, std::string("cannot write ") + csv_path);
    }
    if (table) {
      std::ostringstream os;
      pdelta::write_table(os, r);
      const std::string text = os.str();
      table(text.data(), text.size(), user);
    }
    if (result) *result = pd_disproportion_result{r.rows.size(), r.earliest_over_latest, r.spread};
    return PD_OK;
  });
}

pd_status pd_network_create(const char* kind, uint64_t seed, pd_network** out) {
  PD_REQUIRE(kind && out, "pd_network_create: NULL argument");
  return guarded([&] {
    const std::string k = kind;
    if (k != "mnist" && k != "reduced") {
      return fail(PD_ERR_INVALID_ARGUMENT,
                  "pd_network_create: unknown kind '" + k + "' (expected mnist, reduced)");
    }
    auto net = std::make_unique<pd_network>(
        pd_network{k == "mnist" ? pdelta::build_mnist_net() : pdelta::build_reduced_net()});
    pdelta::init(net->net, pdelta::InitPolicy{0.1, 0.1, seed});
    *out = net.release();
    return PD_OK;
  });
}

void pd_network_destroy(pd_network* network) { delete network; }

pd_status pd_network_parameter_count(const pd_network* network, size_t* count) {
  PD_REQUIRE(network && count, "pd_network_parameter_count: NULL argument");
  *count = network->net.parameter_count();
  return PD_OK;
}

pd_status pd_network_tensor_count(const pd_network* network, size_t* count) {
  PD_REQUIRE(network && count, "pd_network_tensor_count: NULL argument");
  *count = network->net.params().size();
  return PD_OK;
}

pd_status pd_network_tensor_info(const pd_network* network, size_t index, const char** name,
                                 size_t* size) {
  PD_REQUIRE(network, "pd_network_tensor_info: network is NULL");
  PD_REQUIRE(index < network->net.params().size(), "pd_network_tensor_info: index out of range");
  const pdelta::Parameter& p = network->net.params()[index];
  if (name) *name = p.name.c_str();
  if (size) *size = p.value.size();
  return PD_OK;
}

pd_status pd_network_input_size(const pd_network* network, size_t* per_example) {
  PD_REQUIRE(network && per_example, "pd_network_input_size: NULL argument");
  *per_example = pdelta::element_count(network->net.input_shape());
  return PD_OK;
}

pd_status pd_network_get_tensor(const pd_network* network, size_t index, double* values,
                                size_t size) {
  PD_REQUIRE(network && values, "pd_network_get_tensor: NULL argument");
  PD_REQUIRE(index < network->net.params().size(), "pd_network_get_tensor: index out of range");
  const pdelta::Tensor& t = network->net.params()[index].value;
  PD_REQUIRE(size == t.size(), "pd_network_get_tensor: size mismatch");
  std::memcpy(values, t.raw(), size * sizeof(double));
  return PD_OK;
}

pd_status pd_network_set_tensor(pd_network* network, size_t index, const double* values,
                                size_t size) {
  PD_REQUIRE(network && values, "pd_network_set_tensor: NULL argument");
  PD_REQUIRE(index < network->net.params().size(), "pd_network_set_tensor: index out of range");
  pdelta::Tensor& t = network->net.mutable_params()[index].value;
  PD_REQUIRE(size == t.size(), "pd_network_set_tensor: size mismatch");
  std::memcpy(t.raw(), values, size * sizeof(double));
  return PD_OK;
}

pd_status pd_network_get_grad(const pd_network* network, size_t index, double* values,
                              size_t size) {
  PD_REQUIRE(network && values, "pd_network_get_grad: NULL argument");
  PD_REQUIRE(index < network->net.params().size(), "pd_network_get_grad: index out of range");
  const pdelta::Tensor& g = network->net.params()[index].grad;
  PD_REQUIRE(size == g.size(), "pd_network_get_grad: size mismatch");
  std::memcpy(values, g.raw(), size * sizeof(double));
  return PD_OK;
}

namespace {

pdelta::Tensor batch_tensor(const pdelta::Network& net, const double* inputs, size_t batch) {
  pdelta::Shape shape{batch};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  const size_t n = pdelta::element_count(shape);
  return pdelta::Tensor(shape, std::vector<double>(inputs, inputs + n));
}

}  // namespace

pd_status pd_network_compute_gradients(pd_network* network, const double* inputs,
                                       const int* labels, size_t batch, double* loss) {
  PD_REQUIRE(network && inputs && labels && batch > 0,
             "pd_network_compute_gradients: NULL argument or empty batch");
  return guarded([&] {
    const pdelta::Tensor x = batch_tensor(network->net, inputs, batch);
    const pdelta::ForwardCache cache = network->net.forward(x, std::span<const int>(labels, batch));
    network->net.backward(cache);
    if (loss) *loss = cache.loss;
    return PD_OK;
  });
}

pd_status pd_network_accuracy(const pd_network* network, const double* inputs, const int* labels,
                              size_t batch, double* accuracy) {
  PD_REQUIRE(network && inputs && labels && accuracy && batch > 0,
             "pd_network_accuracy: NULL argument or empty batch");
  return guarded([&] {
    const pdelta::Tensor x = batch_tensor(network->net, inputs, batch);
    *accuracy = network->net.accuracy(x, std::span<const int>(labels, batch));
    return PD_OK;
  });
}

void pd_optimizer_options_init(pd_optimizer_options* options) {
  if (!options) return;
  options->rule = "percentdelta";
  options->eta = 0.03;
  options->decay = "clamped";
  options->decay_m = 0.01;
  options->decay_beta = 0.01;
  options->momentum = pdelta::kDefaultMomentum;
  options->eps = pdelta::kDefaultEps;
}

pd_status pd_optimizer_create(const pd_optimizer_options* options, const pd_network* network,
                              pd_optimizer** out) {
  PD_REQUIRE(options && options->rule && options->decay && network && out,
             "pd_optimizer_create: NULL argument");
  return guarded([&] {
    auto opt = std::make_unique<pd_optimizer>();
    opt->rule.kind = pdelta::parse_rule(options->rule);
    opt->rule.mu = opt->rule.uses_momentum() ? options->momentum : 0.0;
    opt->rule.eps = options->eps;
    opt->schedule.eta = options->eta;
    opt->schedule.kind = pdelta::parse_decay(options->decay);
    opt->schedule.m = options->decay_m;
    opt->schedule.beta = options->decay_beta;
    opt->rule.validate();
    opt->schedule.validate();
    opt->state = pdelta::OptimizerState::for_network(network->net);
    *out = opt.release();
    return PD_OK;
  });
}

void pd_optimizer_destroy(pd_optimizer* optimizer) { delete optimizer; }

pd_status pd_optimizer_step(pd_optimizer* optimizer, pd_network* network, pd_step_record* records,
                            size_t capacity) {
  PD_REQUIRE(optimizer && network, "pd_optimizer_step: NULL argument");
  const size_t tensors = network->net.params().size();
  PD_REQUIRE(!records || capacity >= tensors, "pd_optimizer_step: records too small");
  return guarded([&] {
    const std::vector<pdelta::StepRecord> recs =
        pdelta::step(optimizer->rule, optimizer->state, network->net, optimizer->schedule);
    if (records) {
      for (size_t i = 0; i < recs.size(); ++i) {
        const pdelta::StepRecord& r = recs[i];
        records[i] = pd_step_record{r.step,
                                    network->net.params()[i].name.c_str(),
                                    r.l1_w,
                                    r.l1_delta_raw,
                                    r.l1_delta_applied,
                                    r.rel_delta_raw,
                                    r.rel_delta_applied,
                                    r.mean_rel_delta_raw,
                                    r.multiplier,
                                    r.gamma};
      }
    }
    return PD_OK;
  });
}

}  // extern "C"
