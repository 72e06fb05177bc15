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

#include "percentdelta/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "percentdelta/ops.hpp"

namespace pdelta {

namespace {

bool finite(double x) { return std::isfinite(x); }

// Guarded denominator used by safe_divide.
inline double push_from_zero(double b, double eps) { return b + (b < 0.0 ? -eps : eps); }

}  // namespace

void Schedule::validate() const {
  if (!finite(eta) || eta < 0.0) {
    throw std::invalid_argument("schedule: eta must be finite and non-negative");
  }
  if (kind == DecayKind::kConstant) return;
  if (!(m > 0.0 && m < 1.0)) {
    throw std::invalid_argument("schedule: decay slope m must lie in (0, 1)");
  }
  if (kind == DecayKind::kClampedLinear && !(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("schedule: clamp floor beta must lie in (0, 1]");
  }
}

double gamma(const Schedule& schedule, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("gamma: t must be non-negative");
  if (schedule.kind == DecayKind::kConstant) return 1.0;
  const double linear = std::fma(-static_cast<double>(t), schedule.m, 1.0);
  if (schedule.kind == DecayKind::kLinear) {
    return schedule.allow_negative ? linear : std::max(0.0, linear);
  }
  return std::max(schedule.beta, linear);
}

DecayKind parse_decay(const std::string& name) {
  if (name == "constant") return DecayKind::kConstant;
  if (name == "linear") return DecayKind::kLinear;
  if (name == "clamped" || name == "clamped_linear") return DecayKind::kClampedLinear;
  throw std::invalid_argument("unknown decay '" + name + "' (expected constant, linear, clamped)");
}

const char* decay_name(DecayKind kind) {
  switch (kind) {
    case DecayKind::kConstant:
      return "constant";
    case DecayKind::kLinear:
      return "linear";
    case DecayKind::kClampedLinear:
      return "clamped";
  }
  return "?";
}

RuleKind parse_rule(const std::string& name) {
  if (name == "sgd") return RuleKind::kSgd;
  if (name == "momentum") return RuleKind::kMomentum;
  if (name == "adagrad") return RuleKind::kAdaGrad;
  if (name == "adam") return RuleKind::kAdam;
  if (name == "lars") return RuleKind::kLars;
  if (name == "percentdelta" || name == "pd") return RuleKind::kPercentDelta;
  throw std::invalid_argument("unknown optimizer '" + name +
                              "' (expected sgd, momentum, adagrad, adam, lars, percentdelta)");
}

const char* rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::kSgd:
      return "sgd";
    case RuleKind::kMomentum:
      return "momentum";
    case RuleKind::kAdaGrad:
      return "adagrad";
    case RuleKind::kAdam:
      return "adam";
    case RuleKind::kLars:
      return "lars";
    case RuleKind::kPercentDelta:
      return "percentdelta";
  }
  return "?";
}

void UpdateRule::validate() const {
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("optimizer: momentum must lie in [0, 1)");
  if (!(eps > 0.0) || !finite(eps)) throw std::invalid_argument("optimizer: eps must be positive");
  if (kind == RuleKind::kAdam &&
      !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: adam betas must lie in (0, 1)");
  }
}

OptimizerState OptimizerState::for_network(const Network& net) {
  OptimizerState state;
  for (const Parameter& p : net.params()) {
    const Shape& s = p.value.shape();
    state.tensors.emplace(p.name, TensorState{Tensor(s), Tensor(s), Tensor(s), Tensor(s), Tensor(s)});
  }
  return state;
}

Tensor safe_divide(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "safe_divide");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / push_from_zero(b[i], eps);
  return out;
}

double pd_multiplier(const Tensor& grad, const Tensor& w, double eps) {
  require_same_shape(grad, w, "pd_multiplier");
  double norm = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) norm += std::abs(grad[i] / push_from_zero(w[i], eps));
  if (norm == 0.0) return 0.0;
  return static_cast<double>(w.size()) / norm;
}

namespace {

// The *_into helpers write the delta into `out`, which has the parameter's
// shape. They back both the pure delta_* functions and step().

void scaled_into(const Tensor& a, double factor, Tensor& out) {
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = factor * a[i];
}

// Returns the multiplier.
double percent_delta_into(const Tensor& grad, const Tensor& w, double r, double eps, Tensor& out) {
  const double multiplier = pd_multiplier(grad, w, eps);
  if (w.size() == 1) {
    // size 1: the multiplier reduces to |w / grad|, so the delta is
    // rate * |w| * sgn(grad). Evaluated in that form to avoid the round trip.
    const double g = grad[0];
    const double mag = std::abs(push_from_zero(w[0], eps));
    out[0] = g > 0.0 ? r * mag : (g < 0.0 ? -(r * mag) : 0.0);
  } else {
    scaled_into(grad, r * multiplier, out);
  }
  return multiplier;
}

void adagrad_into(const Tensor& grad, Tensor& sum, double r, double eps, Tensor& out) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    sum[i] += grad[i] * grad[i];
    out[i] = r * (grad[i] / (std::sqrt(sum[i]) + eps));
  }
}

void adam_into(const Tensor& grad, Tensor& m, Tensor& v, double r, std::int64_t t, double beta1,
               double beta2, double eps, Tensor& out) {
  const double step = static_cast<double>(t + 1);
  const double correct1 = 1.0 - std::pow(beta1, step);
  const double correct2 = 1.0 - std::pow(beta2, step);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double m_hat = m[i] / correct1;
    const double v_hat = v[i] / correct2;
    out[i] = r * (m_hat / (std::sqrt(v_hat) + eps));
  }
}

// Returns the trust ratio (0 for a zero gradient).
double lars_into(const Tensor& grad, const Tensor& w, double r, double eps, Tensor& out) {
  const double g_norm = l2_norm(grad);
  if (g_norm == 0.0) {
    out.fill(0.0);
    return 0.0;
  }
  const double ratio = l2_norm(w) / (g_norm + eps);
  scaled_into(grad, r * ratio, out);
  return ratio;
}

}  // namespace

Tensor delta_percent_delta(const Tensor& grad, const Tensor& w, const Schedule& schedule,
                           std::int64_t t, double eps) {
  require_same_shape(grad, w, "delta_percent_delta");
  Tensor out(w.shape());
  percent_delta_into(grad, w, rate(schedule, t), eps, out);
  return out;
}

Tensor delta_sgd(const Tensor& grad, const Schedule& schedule, std::int64_t t) {
  Tensor out(grad.shape());
  scaled_into(grad, rate(schedule, t), out);
  return out;
}

Tensor delta_adagrad(const Tensor& grad, Tensor& sum, const Schedule& schedule, std::int64_t t,
                     double eps) {
  require_same_shape(grad, sum, "delta_adagrad");
  Tensor out(grad.shape());
  adagrad_into(grad, sum, rate(schedule, t), eps, out);
  return out;
}

Tensor delta_adam(const Tensor& grad, Tensor& m, Tensor& v, const Schedule& schedule,
                  std::int64_t t, double beta1, double beta2, double eps) {
  require_same_shape(grad, m, "delta_adam");
  require_same_shape(grad, v, "delta_adam");
  Tensor out(grad.shape());
  adam_into(grad, m, v, rate(schedule, t), t, beta1, beta2, eps, out);
  return out;
}

Tensor delta_lars(const Tensor& grad, const Tensor& w, const Schedule& schedule, std::int64_t t,
                  double eps) {
  require_same_shape(grad, w, "delta_lars");
  Tensor out(grad.shape());
  lars_into(grad, w, rate(schedule, t), eps, out);
  return out;
}

const Tensor& apply_momentum(Tensor& velocity, const Tensor& delta, double mu) {
  require_same_shape(velocity, delta, "apply_momentum");
  for (std::size_t i = 0; i < delta.size(); ++i) velocity[i] = mu * velocity[i] + delta[i];
  return velocity;
}

std::vector<StepRecord> step(const UpdateRule& rule, OptimizerState& state, Network& net,
                             const Schedule& schedule) {
  const std::int64_t t = state.t;
  const double g_t = gamma(schedule, t);
  const double r = schedule.eta * g_t;
  std::vector<StepRecord> records;
  std::vector<Parameter>& params = net.mutable_params();
  records.reserve(params.size());
  for (Parameter& p : params) {
    auto it = state.tensors.find(p.name);
    if (it == state.tensors.end()) {
      throw std::out_of_range("optimizer state has no entry for tensor '" + p.name + "'");
    }
    TensorState& ts = it->second;
    require_same_shape(p.grad, p.value, "step");
    require_same_shape(ts.velocity, p.value, "step");
    if (!ts.delta.same_shape(p.value)) ts.delta = Tensor(p.value.shape());
    Tensor& raw = ts.delta;

    double multiplier = 1.0;
    switch (rule.kind) {
      case RuleKind::kSgd:
      case RuleKind::kMomentum:
        scaled_into(p.grad, r, raw);
        break;
      case RuleKind::kAdaGrad:
        adagrad_into(p.grad, ts.adagrad_sum, r, rule.eps, raw);
        break;
      case RuleKind::kAdam:
        adam_into(p.grad, ts.adam_m, ts.adam_v, r, t, rule.beta1, rule.beta2, rule.eps, raw);
        break;
      case RuleKind::kLars:
        multiplier = lars_into(p.grad, p.value, r, rule.eps, raw);
        break;
      case RuleKind::kPercentDelta:
        multiplier = percent_delta_into(p.grad, p.value, r, rule.eps, raw);
        break;
    }
    const double l1_raw = l1_norm(raw);
    if (rule.kind == RuleKind::kAdaGrad || rule.kind == RuleKind::kAdam) {
      // Effective scalar gain relative to plain SGD.
      const double g1 = l1_norm(p.grad);
      multiplier = (g1 == 0.0 || r == 0.0) ? 0.0 : l1_raw / (r * g1);
    }
    const Tensor& applied = rule.uses_momentum() ? apply_momentum(ts.velocity, raw, rule.mu) : raw;

    StepRecord rec;
    rec.step = t;
    rec.tensor_name = p.name;
    rec.l1_w = l1_norm(p.value);
    rec.l1_delta_raw = l1_raw;
    rec.l1_delta_applied = &applied == &raw ? l1_raw : l1_norm(applied);
    rec.rel_delta_raw = rec.l1_w == 0.0 ? kUndefinedRatio : rec.l1_delta_raw / rec.l1_w;
    rec.rel_delta_applied = rec.l1_w == 0.0 ? kUndefinedRatio : rec.l1_delta_applied / rec.l1_w;
    rec.mean_rel_delta_raw = mean_relative_delta(raw, p.value, rule.eps);
    rec.multiplier = multiplier;
    rec.gamma = g_t;
    records.push_back(std::move(rec));

    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= applied[i];
  }
  ++state.t;
  return records;
}

}  // namespace pdelta
