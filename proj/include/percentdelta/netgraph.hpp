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

// Layer-sequence networks: forward evaluation, exact backpropagation, a
// named parameter registry, and the finite-difference gradient oracle.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "percentdelta/tensor.hpp"

namespace pdelta {

enum class LayerKind { kConv, kMaxPool2, kFlatten, kDense, kReLU, kSigmoid };

enum class Activation { kReLU, kSigmoid };

/// Parses "relu" / "sigmoid"; throws std::invalid_argument otherwise.
Activation parse_activation(const std::string& name);
const char* activation_name(Activation activation);

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  /// Parameter prefix for conv and dense layers, e.g. "conv0" or "fc1".
  std::string name;
  /// Square kernel size (conv only).
  std::size_t kernel = 0;
  /// Conv: input/output channels. Dense: fan-in/fan-out.
  std::size_t in = 0;
  std::size_t out = 0;

  static LayerSpec conv(std::string name, std::size_t kernel, std::size_t in, std::size_t out);
  static LayerSpec dense(std::string name, std::size_t in, std::size_t out);
  static LayerSpec max_pool2() { return of_kind(LayerKind::kMaxPool2); }
  static LayerSpec flatten() { return of_kind(LayerKind::kFlatten); }
  static LayerSpec relu() { return of_kind(LayerKind::kReLU); }
  static LayerSpec sigmoid() { return of_kind(LayerKind::kSigmoid); }
  static LayerSpec of_kind(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    return s;
  }
  static LayerSpec activation(Activation a) { return a == Activation::kReLU ? relu() : sigmoid(); }
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Network;

/// Everything backward needs from one forward pass.
struct ForwardCache {
  const Network* owner = nullptr;
  std::uint64_t generation = 0;
  /// activations[0] is the input batch; activations[j + 1] is layer j's output.
  std::vector<Tensor> activations;
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<int> labels;
  double loss = 0.0;
  Tensor dlogits;

  const Tensor& logits() const { return activations.back(); }
};

struct InitPolicy {
  double weight_stddev = 0.1;
  double bias_constant = 0.1;
  std::uint64_t seed = 0;
};

class Network {
 public:
  /// `input_shape` is the per-example shape ([H, W, C] or [features]).
  /// Throws ShapeError when consecutive layers do not compose.
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Per-example output shape of every layer.
  const std::vector<Shape>& layer_shapes() const noexcept { return layer_shapes_; }
  const Shape& output_shape() const { return layer_shapes_.back(); }

  const std::vector<Parameter>& params() const noexcept { return params_; }
  /// Mutable access; invalidates every outstanding ForwardCache.
  std::vector<Parameter>& mutable_params() noexcept {
    ++generation_;
    return params_;
  }
  const Parameter* find(const std::string& name) const;
  std::size_t parameter_count() const;
  std::uint64_t generation() const noexcept { return generation_; }

  /// Runs the batch [B, input_shape...] through every layer and the softmax
  /// loss. Labels index the last layer's output units.
  ForwardCache forward(const Tensor& inputs, std::span<const int> labels) const;

  /// Fills every grad buffer with dJ/dW from the cache's loss gradient.
  void backward(const ForwardCache& cache);
  /// Same, starting from an arbitrary gradient w.r.t. the logits.
  void backward(const ForwardCache& cache, const Tensor& dlogits);

  /// Logits for a batch, evaluated in chunks without keeping a cache.
  Tensor logits(const Tensor& inputs, std::size_t chunk = 100) const;
  /// Fraction of examples whose argmax logit equals the label.
  double accuracy(const Tensor& inputs, std::span<const int> labels, std::size_t chunk = 100) const;

 private:
  Tensor run_layers(const Tensor& inputs, ForwardCache* cache) const;

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> layer_shapes_;
  std::vector<Parameter> params_;
  /// Index of each conv/dense layer's first parameter (kernel/weights); the
  /// bias follows it.
  std::vector<std::size_t> param_index_;
  std::uint64_t generation_ = 0;
};

/// conv5x5(1->32)+ReLU+pool, conv5x5(32->64)+ReLU+pool, flatten,
/// dense(3136->1024)+ReLU, dense(1024->10) over 28x28x1 inputs.
Network build_mnist_net();

/// 8x8x1 input, conv3x3(1->4)+ReLU, pool, flatten, dense(64->8).
Network build_reduced_net();

/// `depth` dense layers of width `width`, each followed by `activation`.
Network build_dense_chain(std::size_t depth, std::size_t width, Activation activation);

/// Truncated normal weights (|z| < 2, rejection), constant biases. Parameters
/// are drawn in registry order from a single Rng(policy.seed).
void init(Network& net, const InitPolicy& policy);

/// True for kernel/weight tensors, false for biases.
bool is_weight(const Parameter& p);

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.

/// Central difference (f(x + h) - f(x - h)) / 2h.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double h = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  /// Entries whose relative error is not below the tolerance.
  std::vector<GradCheckEntry> flagged;
  GradCheckEntry worst;
  /// Largest relative error per parameter tensor, registry order.
  std::vector<std::pair<std::string, double>> per_tensor;

  bool passed() const { return flagged.empty(); }
  double max_rel_error() const { return worst.rel_error; }
};

GradCheckReport grad_check(Network& net, const Tensor& inputs, std::span<const int> labels,
                           double h, double tolerance);

void write_report(std::ostream& os, const GradCheckReport& report);

// ---------------------------------------------------------------------------
// Layer-wise gradient magnitude diagnostic over a dense chain.

struct DisproportionRow {
  std::size_t layer_index = 0;
  std::string tensor_name;
  double l1_grad = 0.0;
  double l1_grad_per_entry = 0.0;
  double ratio_to_last = 0.0;
};

struct DisproportionReport {
  std::size_t depth = 0;
  std::size_t width = 0;
  Activation activation = Activation::kSigmoid;
  std::vector<DisproportionRow> rows;
  /// Per-entry gradient magnitude of layer 0 over that of the last layer.
  double earliest_over_latest = 1.0;
  /// max(r, 1/r) of earliest_over_latest: 1 means proportionate.
  double spread = 1.0;
};

/// Weight gradients of a freshly initialized chain on a seeded random batch
/// (inputs ~ N(0, 1), uniform random labels over `width` classes). Biases are
/// registered but not reported.
DisproportionReport disproportion_report(std::size_t depth, std::size_t width,
                                         Activation activation, double init_stddev,
                                         std::uint64_t seed, std::size_t batch = 32);

/// CSV: layer_index,tensor_name,l1_grad,l1_grad_per_entry,ratio_to_last
void write_csv(std::ostream& os, const DisproportionReport& report);

}  // namespace pdelta
