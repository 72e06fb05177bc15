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

// Update rules, decay schedules and the momentum accumulator.
//
// Every delta_* function returns the amount to subtract from the parameter,
// W <- W - delta. Learning rate and decay enter only through
// rate = eta * gamma(t).
//
// PercentDelta scales each tensor's gradient by
//
//     size(W) / || grad / W ||_1
//
// (element-wise division, epsilon-guarded), so that the mean element-wise
// relative change |delta_i / W_i| equals eta * gamma(t) for every tensor,
// whatever the magnitude of its gradient. The scale is a positive scalar, so
// the update keeps the gradient's direction.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "percentdelta/metrics.hpp"
#include "percentdelta/netgraph.hpp"
#include "percentdelta/tensor.hpp"

namespace pdelta {

inline constexpr double kDefaultEps = 1e-8;
inline constexpr double kDefaultMomentum = 0.9;

enum class DecayKind { kConstant, kLinear, kClampedLinear };

struct Schedule {
  double eta = 0.03;
  DecayKind kind = DecayKind::kClampedLinear;
  /// Decay slope for Linear and ClampedLinear.
  double m = 0.01;
  /// Floor for ClampedLinear.
  double beta = 0.01;
  /// Linear only: let gamma go below zero instead of stopping at 0.
  bool allow_negative = false;

  static Schedule constant(double eta) { return {eta, DecayKind::kConstant, 0.0, 0.0}; }
  static Schedule linear(double eta, double m) { return {eta, DecayKind::kLinear, m, 0.0}; }
  static Schedule clamped_linear(double eta, double m, double beta) {
    return {eta, DecayKind::kClampedLinear, m, beta};
  }

  /// Throws std::invalid_argument for out-of-range slopes or floors.
  void validate() const;
};

/// Constant: 1. Linear: 1 - t*m (floored at 0 unless allow_negative).
/// ClampedLinear: max(beta, 1 - t*m). 1 - t*m is evaluated with a single
/// rounding (fma).
double gamma(const Schedule& schedule, std::int64_t t);
inline double rate(const Schedule& schedule, std::int64_t t) {
  return schedule.eta * gamma(schedule, t);
}

DecayKind parse_decay(const std::string& name);
const char* decay_name(DecayKind kind);

enum class RuleKind { kSgd, kMomentum, kAdaGrad, kAdam, kLars, kPercentDelta };

RuleKind parse_rule(const std::string& name);
const char* rule_name(RuleKind kind);

struct UpdateRule {
  RuleKind kind = RuleKind::kPercentDelta;
  double mu = kDefaultMomentum;
  double eps = kDefaultEps;
  double beta1 = 0.9;
  double beta2 = 0.999;

  static UpdateRule sgd() { return {RuleKind::kSgd, 0.0}; }
  static UpdateRule momentum(double mu = kDefaultMomentum) { return {RuleKind::kMomentum, mu}; }
  static UpdateRule adagrad(double eps = kDefaultEps) { return {RuleKind::kAdaGrad, 0.0, eps}; }
  static UpdateRule adam(double beta1 = 0.9, double beta2 = 0.999, double eps = kDefaultEps) {
    return {RuleKind::kAdam, 0.0, eps, beta1, beta2};
  }
  static UpdateRule lars(double eps = kDefaultEps, double mu = kDefaultMomentum) {
    return {RuleKind::kLars, mu, eps};
  }
  static UpdateRule percent_delta(double eps = kDefaultEps, double mu = kDefaultMomentum) {
    return {RuleKind::kPercentDelta, mu, eps};
  }

  /// Momentum, LARS and PercentDelta feed their delta through the velocity
  /// accumulator; SGD, AdaGrad and Adam apply it directly.
  bool uses_momentum() const {
    return kind == RuleKind::kMomentum || kind == RuleKind::kLars ||
           kind == RuleKind::kPercentDelta;
  }

  void validate() const;
};

struct TensorState {
  Tensor adagrad_sum;
  Tensor adam_m;
  Tensor adam_v;
  Tensor velocity;
  /// Scratch buffer for the current raw delta.
  Tensor delta;
};

struct OptimizerState {
  std::map<std::string, TensorState> tensors;
  /// Completed steps; the schedule is evaluated at this t.
  std::int64_t t = 0;

  /// Zeroed state for every tensor of `net`.
  static OptimizerState for_network(const Network& net);
};

/// a / (b + eps * sgn(b)) element-wise, with sgn(0) = +1.
Tensor safe_divide(const Tensor& a, const Tensor& b, double eps);

/// size(w) / ||safe_divide(grad, w, eps)||_1, or 0 when that norm is 0.
double pd_multiplier(const Tensor& grad, const Tensor& w, double eps);

Tensor delta_percent_delta(const Tensor& grad, const Tensor& w, const Schedule& schedule,
                           std::int64_t t, double eps);
Tensor delta_sgd(const Tensor& grad, const Schedule& schedule, std::int64_t t);
/// Updates sum <- sum + grad^2, then returns rate * grad / (sqrt(sum) + eps).
Tensor delta_adagrad(const Tensor& grad, Tensor& sum, const Schedule& schedule, std::int64_t t,
                     double eps);
/// Updates both moments; bias correction uses step number t + 1.
Tensor delta_adam(const Tensor& grad, Tensor& m, Tensor& v, const Schedule& schedule,
                  std::int64_t t, double beta1, double beta2, double eps);
/// rate * ||w||_2 / (||grad||_2 + eps) * grad; zero when grad is zero.
Tensor delta_lars(const Tensor& grad, const Tensor& w, const Schedule& schedule, std::int64_t t,
                  double eps);
/// velocity <- mu * velocity + delta; returns the updated velocity.
const Tensor& apply_momentum(Tensor& velocity, const Tensor& delta, double mu);

/// Applies one update to every registered tensor of `net` from its current
/// grad buffer and advances state.t by one. Returns one record per tensor in
/// registry order (loss and test accuracy are left for the caller).
/// Throws std::out_of_range for a tensor missing from the state.
std::vector<StepRecord> step(const UpdateRule& rule, OptimizerState& state, Network& net,
                             const Schedule& schedule);

}  // namespace pdelta
