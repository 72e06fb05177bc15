/* Copyright 2026 The PercentDelta Lab Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the percentdelta library.
 *
 * Every function returns a pd_status. On failure a description is available
 * from pd_last_error() until the next call on the same thread. Handles are
 * opaque; each *_create has a matching *_destroy that accepts NULL.
 * Handles are not synchronized: use one handle from one thread at a time.
 */

#ifndef PERCENTDELTA_H_
#define PERCENTDELTA_H_

#include <stddef.h>
#include <stdint.h>

#if defined(PDELTA_BUILDING_LIBRARY)
#define PD_API __attribute__((visibility("default")))
#else
#define PD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pd_status {
  PD_OK = 0,
  PD_ERR_INVALID_ARGUMENT = 1, /* bad pointer, name or value */
  PD_ERR_CONFIG = 2,           /* config key, value or file problem */
  PD_ERR_IO = 3,               /* file could not be read or written */
  PD_ERR_DATA = 4,             /* malformed IDX or CSV input */
  PD_ERR_DIVERGED = 5,         /* training stopped on divergence */
  PD_ERR_CHECK_FAILED = 6,     /* a verification did not pass */
  PD_ERR_BUFFER_TOO_SMALL = 7,
  PD_ERR_INTERNAL = 8
} pd_status;

PD_API const char* pd_status_name(pd_status status);
/* Message for the last failure on this thread ("" after success). */
PD_API const char* pd_last_error(void);
PD_API const char* pd_version(void);

/* Receives text output (progress lines, reports). */
typedef void (*pd_write_fn)(const char* text, size_t length, void* user);

/* ---- run configuration ------------------------------------------------ */

typedef struct pd_config pd_config;

/* Starts from the desk-scale defaults. */
PD_API pd_status pd_config_create(pd_config** out);
PD_API void pd_config_destroy(pd_config* config);
/* Applies a `key = value` file on top of the current values. */
PD_API pd_status pd_config_load(pd_config* config, const char* path);
PD_API pd_status pd_config_set(pd_config* config, const char* key, const char* value);
/* Writes the config-file text. On PD_ERR_BUFFER_TOO_SMALL, *needed holds
 * the required size including the terminating NUL. */
PD_API pd_status pd_config_format(const pd_config* config, char* buffer, size_t size,
                                  size_t* needed);
PD_API pd_status pd_config_validate(const pd_config* config);

/* ---- experiments ------------------------------------------------------ */

typedef struct pd_run_summary {
  int diverged;
  int64_t steps_completed;
  /* NaN when no evaluation happened. */
  double final_accuracy;
  double final_smoothed_accuracy;
  double best_accuracy;
  int64_t best_step;
  double final_loss;
  double wall_seconds;
} pd_run_summary;

/* Trains with `config`. Returns PD_ERR_DIVERGED (with *summary filled) when
 * the run stopped on divergence. `log` may be NULL. */
PD_API pd_status pd_train(const pd_config* config, pd_run_summary* summary, pd_write_fn log,
                          void* user);

typedef struct pd_sweep_summary {
  size_t cells;
  size_t completed;
  size_t diverged;
  size_t failed;
  /* -1 when no cell completed. */
  int64_t best_cell;
} pd_sweep_summary;

/* `axes` holds `count` strings "key=v1,v2,..."; count 0 sweeps the default
 * learning-rate grid. */
PD_API pd_status pd_sweep(const pd_config* base, const char* const* axes, size_t count,
                          pd_sweep_summary* summary, pd_write_fn log, void* user);

typedef struct pd_plot_options {
  const char* kind; /* "accuracy_curve" or "relative_delta_bars" */
  double smoothing; /* [0, 1) */
  double y_min;     /* NaN: from the data */
  double x_max;     /* NaN: no limit */
  int64_t bar_stride;
  size_t bar_groups;
  const char* title; /* NULL: default */
  int64_t highlight; /* index of the CSV drawn in red, or -1 */
} pd_plot_options;

PD_API void pd_plot_options_init(pd_plot_options* options);
/* `labels` may be NULL. */
PD_API pd_status pd_plot(const char* const* csv_paths, const char* const* labels, size_t count,
                         const char* out_svg, const pd_plot_options* options);

typedef struct pd_gradcheck_result {
  size_t checked;
  size_t flagged;
  double max_rel_error;
  int passed;
} pd_gradcheck_result;

/* Finite-difference check of the reduced net. The report text goes to
 * `report` when given. Returns PD_ERR_CHECK_FAILED when an entry is at or
 * above `tolerance`. */
PD_API pd_status pd_gradcheck(uint64_t seed, double tolerance, double h,
                              pd_gradcheck_result* result, pd_write_fn report, void* user);

typedef struct pd_disproportion_result {
  size_t rows;
  double earliest_over_latest;
  double spread;
} pd_disproportion_result;

/* Gradient magnitudes per layer of a dense chain at init. Writes the CSV to
 * `csv_path` when non-NULL and the table to `table` when given. */
PD_API pd_status pd_disproportion(size_t depth, size_t width, const char* activation,
                                  double stddev, uint64_t seed, const char* csv_path,
                                  pd_disproportion_result* result, pd_write_fn table,
                                  void* user);

/* ---- networks and optimizers ----------------------------------------- */

typedef struct pd_network pd_network;

/* kind: "mnist" (28x28x1 conv net, 10 classes) or "reduced" (8x8x1, 8
 * classes). Weights are initialized from `seed`. */
PD_API pd_status pd_network_create(const char* kind, uint64_t seed, pd_network** out);
PD_API void pd_network_destroy(pd_network* network);
PD_API pd_status pd_network_parameter_count(const pd_network* network, size_t* count);
PD_API pd_status pd_network_tensor_count(const pd_network* network, size_t* count);
/* Name and entry count of tensor `index`; the name stays valid while the
 * network lives. */
PD_API pd_status pd_network_tensor_info(const pd_network* network, size_t index,
                                        const char** name, size_t* size);
PD_API pd_status pd_network_input_size(const pd_network* network, size_t* per_example);
/* Copies tensor values out of / into the network. */
PD_API pd_status pd_network_get_tensor(const pd_network* network, size_t index, double* values,
                                       size_t size);
PD_API pd_status pd_network_set_tensor(pd_network* network, size_t index, const double* values,
                                       size_t size);
PD_API pd_status pd_network_get_grad(const pd_network* network, size_t index, double* values,
                                     size_t size);
/* Forward and backward pass over `batch` examples laid out row-major;
 * fills the grad buffers and *loss. */
PD_API pd_status pd_network_compute_gradients(pd_network* network, const double* inputs,
                                              const int* labels, size_t batch, double* loss);
PD_API pd_status pd_network_accuracy(const pd_network* network, const double* inputs,
                                     const int* labels, size_t batch, double* accuracy);

typedef struct pd_optimizer pd_optimizer;

typedef struct pd_optimizer_options {
  const char* rule;  /* sgd, momentum, adagrad, adam, lars, percentdelta */
  double eta;
  const char* decay; /* constant, linear, clamped */
  double decay_m;
  double decay_beta;
  double momentum;
  double eps;
} pd_optimizer_options;

/* PercentDelta, eta 0.03, clamped decay m = beta = 0.01, momentum 0.9. */
PD_API void pd_optimizer_options_init(pd_optimizer_options* options);
PD_API pd_status pd_optimizer_create(const pd_optimizer_options* options,
                                     const pd_network* network, pd_optimizer** out);
PD_API void pd_optimizer_destroy(pd_optimizer* optimizer);

typedef struct pd_step_record {
  int64_t step;
  const char* tensor_name; /* owned by the network */
  double l1_w;
  double l1_delta_raw;
  double l1_delta_applied;
  double rel_delta_raw;
  double rel_delta_applied;
  double mean_rel_delta_raw;
  double multiplier;
  double gamma;
} pd_step_record;

/* Updates every tensor from its grad buffer. `records` may be NULL;
 * otherwise it must hold one entry per tensor. */
PD_API pd_status pd_optimizer_step(pd_optimizer* optimizer, pd_network* network,
                                   pd_step_record* records, size_t capacity);

#ifdef __cplusplus
}
#endif

#endif /* PERCENTDELTA_H_ */
