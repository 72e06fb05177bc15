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

#include "percentdelta/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <utility>

#include "percentdelta/ops.hpp"
#include "percentdelta/rng.hpp"

namespace pdelta {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kReLU;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or sigmoid)");
}

const char* activation_name(Activation activation) {
  return activation == Activation::kReLU ? "relu" : "sigmoid";
}

LayerSpec LayerSpec::conv(std::string name, std::size_t kernel, std::size_t in, std::size_t out) {
  return {LayerKind::kConv, std::move(name), kernel, in, out};
}

LayerSpec LayerSpec::dense(std::string name, std::size_t in, std::size_t out) {
  return {LayerKind::kDense, std::move(name), 0, in, out};
}

namespace {

std::string layer_label(const LayerSpec& spec, std::size_t index) {
  static const char* const kNames[] = {"conv", "maxpool2", "flatten", "dense", "relu", "sigmoid"};
  std::string label = kNames[static_cast<int>(spec.kind)];
  if (!spec.name.empty()) label += " '" + spec.name + "'";
  return label + " (layer " + std::to_string(index) + ")";
}

Shape with_batch(std::size_t batch, const Shape& shape) {
  Shape full{batch};
  full.insert(full.end(), shape.begin(), shape.end());
  return full;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  Shape current = input_shape_;
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const LayerSpec& spec = layers_[j];
    const std::string where = layer_label(spec, j);
    param_index_.push_back(params_.size());
    switch (spec.kind) {
      case LayerKind::kConv: {
        if (current.size() != 3 || current[2] != spec.in || spec.kernel == 0 || spec.out == 0) {
          throw ShapeError(where + ": expects input [H, W, " + std::to_string(spec.in) +
                           "], got " + shape_string(current));
        }
        const Shape kshape{spec.kernel, spec.kernel, spec.in, spec.out};
        params_.push_back({spec.name + "/kernel", Tensor(kshape), Tensor(kshape)});
        params_.push_back({spec.name + "/bias", Tensor({spec.out}), Tensor({spec.out})});
        current[2] = spec.out;
        break;
      }
      case LayerKind::kMaxPool2:
        if (current.size() != 3 || current[0] % 2 != 0 || current[1] % 2 != 0) {
          throw ShapeError(where + ": expects [H, W, C] with even H and W, got " +
                           shape_string(current));
        }
        current = {current[0] / 2, current[1] / 2, current[2]};
        break;
      case LayerKind::kFlatten:
        current = {element_count(current)};
        break;
      case LayerKind::kDense: {
        if (current.size() != 1 || current[0] != spec.in || spec.out == 0) {
          throw ShapeError(where + ": expects input [" + std::to_string(spec.in) + "], got " +
                           shape_string(current));
        }
        const Shape wshape{spec.in, spec.out};
        params_.push_back({spec.name + "/weights", Tensor(wshape), Tensor(wshape)});
        params_.push_back({spec.name + "/bias", Tensor({spec.out}), Tensor({spec.out})});
        current = {spec.out};
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kSigmoid:
        break;
    }
    layer_shapes_.push_back(current);
  }
  if (layer_shapes_.back().size() != 1) {
    throw ShapeError("network output must be flat [K], got " + shape_string(layer_shapes_.back()));
  }
}

const Parameter* Network::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor Network::run_layers(const Tensor& inputs, ForwardCache* cache) const {
  const Shape expected = with_batch(inputs.rank() > 0 ? inputs.dim(0) : 0, input_shape_);
  if (inputs.shape() != expected) {
    throw ShapeError("network input " + shape_string(inputs.shape()) + " does not match " +
                     shape_string(expected));
  }
  const std::size_t batch = inputs.dim(0);
  Tensor x = inputs;
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const LayerSpec& spec = layers_[j];
    Tensor y;
    switch (spec.kind) {
      case LayerKind::kConv: {
        const auto& kernel = params_[param_index_[j]].value;
        const auto& bias = params_[param_index_[j] + 1].value;
        y = conv2d_forward(x, kernel, bias);
        break;
      }
      case LayerKind::kMaxPool2: {
        MaxPoolResult pooled = maxpool2_forward(x);
        y = std::move(pooled.out);
        if (cache) cache->pool_argmax[j] = std::move(pooled.argmax);
        break;
      }
      case LayerKind::kFlatten:
        y = x.reshaped(with_batch(batch, layer_shapes_[j]));
        break;
      case LayerKind::kDense: {
        const auto& weights = params_[param_index_[j]].value;
        const auto& bias = params_[param_index_[j] + 1].value;
        y = Tensor({batch, spec.out});
        gemm(Transpose::kNo, Transpose::kNo, batch, spec.out, spec.in, x.raw(), spec.in,
             weights.raw(), spec.out, y.raw(), spec.out, false);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < spec.out; ++o) y[b * spec.out + o] += bias[o];
        }
        break;
      }
      case LayerKind::kReLU:
        y = relu(x);
        break;
      case LayerKind::kSigmoid:
        y = sigmoid(x);
        break;
    }
    if (cache) {
      cache->activations.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

ForwardCache Network::forward(const Tensor& inputs, std::span<const int> labels) const {
  ForwardCache cache;
  cache.owner = this;
  cache.generation = generation_;
  cache.pool_argmax.resize(layers_.size());
  cache.activations.reserve(layers_.size() + 1);
  cache.activations.push_back(inputs);
  run_layers(inputs, &cache);
  cache.labels.assign(labels.begin(), labels.end());
  SoftmaxXent xent = softmax_xent(cache.logits(), labels);
  cache.loss = xent.loss;
  cache.dlogits = std::move(xent.dlogits);
  return cache;
}

void Network::backward(const ForwardCache& cache) { backward(cache, cache.dlogits); }

void Network::backward(const ForwardCache& cache, const Tensor& dlogits) {
  if (cache.owner != this || cache.generation != generation_ ||
      cache.activations.size() != layers_.size() + 1) {
    throw StaleCacheError(
        "backward: forward cache does not belong to the current state of this network");
  }
  require_same_shape(dlogits, cache.logits(), "backward");
  const std::size_t batch = cache.activations[0].dim(0);
  Tensor dy = dlogits;
  for (std::size_t jj = layers_.size(); jj-- > 0;) {
    const LayerSpec& spec = layers_[jj];
    const Tensor& x = cache.activations[jj];
    const Tensor& y = cache.activations[jj + 1];
    const bool need_dx = jj > 0;
    Tensor dx;
    switch (spec.kind) {
      case LayerKind::kConv: {
        Parameter& kernel = params_[param_index_[jj]];
        Parameter& bias = params_[param_index_[jj] + 1];
        Conv2dGrads grads = conv2d_backward(x, kernel.value, dy, need_dx);
        kernel.grad = std::move(grads.dkernel);
        bias.grad = std::move(grads.dbias);
        dx = std::move(grads.dx);
        break;
      }
      case LayerKind::kMaxPool2:
        dx = maxpool2_backward(dy, cache.pool_argmax[jj], x.shape());
        break;
      case LayerKind::kFlatten:
        dx = std::move(dy).reshaped(x.shape());
        break;
      case LayerKind::kDense: {
        Parameter& weights = params_[param_index_[jj]];
        Parameter& bias = params_[param_index_[jj] + 1];
        // dW = x^T dy: a sum over the batch of outer(x_b, dy_b).
        gemm(Transpose::kYes, Transpose::kNo, spec.in, spec.out, batch, x.raw(), spec.in, dy.raw(),
             spec.out, weights.grad.raw(), spec.out, false);
        bias.grad.fill(0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < spec.out; ++o) bias.grad[o] += dy[b * spec.out + o];
        }
        if (need_dx) {
          dx = Tensor(x.shape());
          gemm(Transpose::kNo, Transpose::kYes, batch, spec.in, spec.out, dy.raw(), spec.out,
               weights.value.raw(), spec.out, dx.raw(), spec.in, false);
        }
        break;
      }
      case LayerKind::kReLU:
        dx = hadamard(dy, relu_mask(x));
        break;
      case LayerKind::kSigmoid:
        dx = hadamard(dy, sigmoid_deriv(y));
        break;
    }
    if (!need_dx) break;
    dy = std::move(dx);
  }
}

Tensor Network::logits(const Tensor& inputs, std::size_t chunk) const {
  const std::size_t n = inputs.dim(0);
  const std::size_t per_example = element_count(input_shape_);
  const std::size_t classes = output_shape()[0];
  Tensor out({n, classes});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t b0 = 0; b0 < n; b0 += chunk) {
    const std::size_t nb = std::min(chunk, n - b0);
    std::vector<double> slice(inputs.raw() + b0 * per_example,
                              inputs.raw() + (b0 + nb) * per_example);
    const Tensor part = run_layers(Tensor(with_batch(nb, input_shape_), std::move(slice)), nullptr);
    std::copy(part.raw(), part.raw() + part.size(), out.raw() + b0 * classes);
  }
  return out;
}

double Network::accuracy(const Tensor& inputs, std::span<const int> labels,
                         std::size_t chunk) const {
  if (labels.empty()) return 0.0;
  const std::vector<int> predicted = argmax_rows(logits(inputs, chunk));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Network build_mnist_net() {
  return Network({28, 28, 1}, {
                                  LayerSpec::conv("conv0", 5, 1, 32),
                                  LayerSpec::relu(),
                                  LayerSpec::max_pool2(),
                                  LayerSpec::conv("conv1", 5, 32, 64),
                                  LayerSpec::relu(),
                                  LayerSpec::max_pool2(),
                                  LayerSpec::flatten(),
                                  LayerSpec::dense("fc0", 7 * 7 * 64, 1024),
                                  LayerSpec::relu(),
                                  LayerSpec::dense("fc1", 1024, 10),
                              });
}

Network build_reduced_net() {
  return Network({8, 8, 1}, {
                                LayerSpec::conv("conv0", 3, 1, 4),
                                LayerSpec::relu(),
                                LayerSpec::max_pool2(),
                                LayerSpec::flatten(),
                                LayerSpec::dense("fc0", 64, 8),
                            });
}

Network build_dense_chain(std::size_t depth, std::size_t width, Activation activation) {
  std::vector<LayerSpec> layers;
  for (std::size_t j = 0; j < depth; ++j) {
    layers.push_back(LayerSpec::dense("fc" + std::to_string(j), width, width));
    layers.push_back(LayerSpec::activation(activation));
  }
  return Network({width}, std::move(layers));
}

bool is_weight(const Parameter& p) {
  return !p.name.ends_with("/bias");
}

void init(Network& net, const InitPolicy& policy) {
  if (!(policy.weight_stddev > 0.0)) {
    throw std::invalid_argument("init: weight_stddev must be positive");
  }
  Rng rng(policy.seed);
  for (Parameter& p : net.mutable_params()) {
    if (!is_weight(p)) {
      p.value.fill(policy.bias_constant);
    } else {
      for (double& v : p.value.data()) {
        double z = rng.normal();
        while (std::abs(z) >= 2.0) z = rng.normal();
        v = policy.weight_stddev * z;
      }
    }
    p.grad.fill(0.0);
  }
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(Network& net, const Tensor& inputs, std::span<const int> labels,
                           double h, double tolerance) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  GradCheckReport report;
  report.h = h;
  report.tolerance = tolerance;
  net.backward(net.forward(inputs, labels));
  std::vector<Tensor> analytic;
  for (const Parameter& p : net.params()) analytic.push_back(p.grad);

  for (std::size_t t = 0; t < analytic.size(); ++t) {
    double tensor_worst = 0.0;
    const std::string name = net.params()[t].name;
    for (std::size_t i = 0; i < analytic[t].size(); ++i) {
      const double original = net.params()[t].value[i];
      net.mutable_params()[t].value[i] = original + h;
      const double plus = net.forward(inputs, labels).loss;
      net.mutable_params()[t].value[i] = original - h;
      const double minus = net.forward(inputs, labels).loss;
      net.mutable_params()[t].value[i] = original;

      GradCheckEntry entry{name, i, analytic[t][i], (plus - minus) / (2.0 * h), 0.0};
      entry.rel_error = relative_error(entry.analytic, entry.numeric);
      ++report.checked;
      tensor_worst = std::max(tensor_worst, entry.rel_error);
      if (report.checked == 1 || entry.rel_error > report.worst.rel_error) report.worst = entry;
      if (!(entry.rel_error < tolerance)) report.flagged.push_back(entry);
    }
    report.per_tensor.emplace_back(name, tensor_worst);
  }
  // Leave the grad buffers as backward produced them.
  std::vector<Parameter>& params = net.mutable_params();
  for (std::size_t t = 0; t < analytic.size(); ++t) params[t].grad = std::move(analytic[t]);
  return report;
}

void write_report(std::ostream& os, const GradCheckReport& report) {
  char line[256];
  std::snprintf(line, sizeof line, "gradient check: %zu entries, h=%.3g, tolerance=%.3g\n",
                report.checked, report.h, report.tolerance);
  os << line;
  for (const auto& [name, worst] : report.per_tensor) {
    std::snprintf(line, sizeof line, "  %-16s max_rel_error=%.6e\n", name.c_str(), worst);
    os << line;
  }
  std::snprintf(line, sizeof line,
                "worst: %s[%zu] analytic=%.12e numeric=%.12e rel_error=%.6e\n",
                report.worst.tensor.c_str(), report.worst.index, report.worst.analytic,
                report.worst.numeric, report.worst.rel_error);
  os << line;
  std::snprintf(line, sizeof line, "flagged: %zu\nresult: %s\n", report.flagged.size(),
                report.passed() ? "PASS" : "FAIL");
  os << line;
}

DisproportionReport disproportion_report(std::size_t depth, std::size_t width,
                                         Activation activation, double init_stddev,
                                         std::uint64_t seed, std::size_t batch) {
  if (depth < 1 || width < 1 || batch < 1) {
    throw std::invalid_argument("disproportion_report: depth, width and batch must be positive");
  }
  Network net = build_dense_chain(depth, width, activation);
  init(net, InitPolicy{init_stddev, 0.0, seed});

  Rng rng = Rng::derive(seed, 0xD15);
  Tensor inputs({batch, width});
  for (double& v : inputs.data()) v = rng.normal();
  std::vector<int> labels(batch);
  for (int& label : labels) label = static_cast<int>(rng.below(width));
  net.backward(net.forward(inputs, labels));

  DisproportionReport report;
  report.depth = depth;
  report.width = width;
  report.activation = activation;
  std::size_t layer = 0;
  for (const Parameter& p : net.params()) {
    if (!is_weight(p)) continue;
    const double l1 = l1_norm(p.grad);
    report.rows.push_back(
        {layer++, p.name, l1, l1 / static_cast<double>(p.grad.size()), 0.0});
  }
  const double last = report.rows.back().l1_grad_per_entry;
  for (auto& row : report.rows) {
    row.ratio_to_last = last > 0.0 ? row.l1_grad_per_entry / last : 0.0;
  }
  report.earliest_over_latest = report.rows.front().ratio_to_last;
  const double r = report.earliest_over_latest;
  report.spread = r > 0.0 ? std::max(r, 1.0 / r) : std::numeric_limits<double>::infinity();
  return report;
}

void write_csv(std::ostream& os, const DisproportionReport& report) {
  os << "layer_index,tensor_name,l1_grad,l1_grad_per_entry,ratio_to_last\n";
  char line[256];
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof line, "%zu,%s,%.17g,%.17g,%.17g\n", row.layer_index,
                  row.tensor_name.c_str(), row.l1_grad, row.l1_grad_per_entry, row.ratio_to_last);
    os << line;
  }
}

}  // namespace pdelta
