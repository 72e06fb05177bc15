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


// Update rules, schedules and the optimizer step.

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "percentdelta/metrics.hpp"
#include "percentdelta/ops.hpp"
#include "percentdelta/optim.hpp"
#include "test_util.hpp"

using namespace pdelta;
using pdelta::testing::random_tensor;
using pdelta::testing::same_bits;

namespace {

const Schedule kUnit = Schedule::constant(1.0);

// Entries with magnitude in [lo, hi) and random sign.
Tensor signed_magnitudes(Shape shape, std::uint64_t seed, double lo, double hi) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data()) {
    const double mag = lo + (hi - lo) * rng.uniform();
    v = rng.below(2) ? mag : -mag;
  }
  return t;
}

double cosine(const Tensor& a, const Tensor& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += (long double)a[i] * b[i];
    na += (long double)a[i] * a[i];
    nb += (long double)b[i] * b[i];
  }
  return double(dot / std::sqrt(na * nb));
}

// Net with two scalar tensors and a 3-vector, grads set by hand.
Network tiny_net() {
  Network net({1}, {LayerSpec::dense("fc", 1, 3)});
  return net;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedules

TEST_CASE("clamped linear schedule values") {
  const Schedule s = Schedule::clamped_linear(0.03, 0.01, 0.01);
  CHECK(gamma(s, 0) == 1.0);
  CHECK(gamma(s, 50) == 0.5);
  CHECK(gamma(s, 99) == 0.01);
  CHECK(gamma(s, 200) == 0.01);
  CHECK(rate(s, 200) == doctest::Approx(0.0003));
}

TEST_CASE("clamped linear stays in [beta, 1]") {
  const Schedule s = Schedule::clamped_linear(1.0, 1.0 / 300.0, 0.01);
  for (std::int64_t t = 0; t < 1000; ++t) {
    REQUIRE(gamma(s, t) <= 1.0);
    REQUIRE(gamma(s, t) >= 0.01);
  }
  for (std::int64_t t : {std::int64_t(1e6), std::int64_t(1e9)}) CHECK(gamma(s, t) == 0.01);
}

TEST_CASE("constant and linear schedules") {
  CHECK(gamma(kUnit, 12345) == 1.0);
  const Schedule lin = Schedule::linear(1.0, 0.25);
  CHECK(gamma(lin, 2) == 0.5);
  CHECK(gamma(lin, 8) == 0.0);
  Schedule neg = lin;
  neg.allow_negative = true;
  CHECK(gamma(neg, 8) == -1.0);
  CHECK_THROWS_AS(gamma(lin, -1), std::invalid_argument);
}

TEST_CASE("schedule validation and names") {
  CHECK_THROWS(Schedule::clamped_linear(0.03, -0.1, 0.01).validate());
  CHECK_THROWS(Schedule::clamped_linear(0.03, 0.01, 0.0).validate());
  CHECK_NOTHROW(Schedule::clamped_linear(0.03, 0.01, 0.01).validate());
  CHECK(parse_decay("clamped") == DecayKind::kClampedLinear);
  CHECK(parse_decay(decay_name(DecayKind::kLinear)) == DecayKind::kLinear);
  CHECK_THROWS_AS(parse_decay("cosine"), std::invalid_argument);
  for (RuleKind k : {RuleKind::kSgd, RuleKind::kMomentum, RuleKind::kAdaGrad, RuleKind::kAdam,
                     RuleKind::kLars, RuleKind::kPercentDelta}) {
    CHECK(parse_rule(rule_name(k)) == k);
  }
  CHECK(parse_rule("pd") == RuleKind::kPercentDelta);
  CHECK_THROWS_AS(parse_rule("rmsprop"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Guarded division and the multiplier

TEST_CASE("safe divide") {
  CHECK(safe_divide(Tensor::scalar(6), Tensor::scalar(3), 0.0)[0] == 2.0);
  CHECK(safe_divide(Tensor::scalar(1), Tensor::scalar(0), 1e-8)[0] == doctest::Approx(1e8));
  CHECK(safe_divide(Tensor::scalar(1), Tensor::scalar(0), 1e-8)[0] > 0.0);
  const double q = safe_divide(Tensor::scalar(1), Tensor::scalar(-2), 1e-8)[0];
  CHECK(std::abs(q + 0.5) <= 1e-8 * 0.5);
  CHECK(q > -0.5);  // denominator pushed away from zero
}

TEST_CASE("percent multiplier by hand and against a direct sum") {
  const Tensor w({2}, {1, -2});
  const Tensor g({2}, {3, -1});
  CHECK(pd_multiplier(g, w, 0.0) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(pd_multiplier(g, w, 0.0) == doctest::Approx(0.571429).epsilon(1e-6));
  const Tensor big = signed_magnitudes({101}, 3, 0.01, 2.0);
  const Tensor grad = random_tensor({101}, 4);
  long double sum = 0;
  for (std::size_t i = 0; i < 101; ++i) sum += std::abs((long double)grad[i] / big[i]);
  CHECK(pd_multiplier(grad, big, 0.0) == doctest::Approx(double(101 / sum)).epsilon(1e-13));
}

TEST_CASE("percent multiplier limits") {
  const Tensor w = signed_magnitudes({50}, 1, 0.1, 3.0);
  CHECK(std::abs(pd_multiplier(w, w, 1e-8) - 1.0) < 1e-7);
  CHECK(pd_multiplier(w, w, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pd_multiplier(Tensor({50}), w, 1e-8) == 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    CHECK(pd_multiplier(random_tensor({9}, s), random_tensor({9}, s + 100), 1e-8) >= 0.0);
  }
}

// ---------------------------------------------------------------------------
// PercentDelta

TEST_CASE("percent delta scalar case moves w by rate * |w|") {
  const Schedule s = Schedule::constant(0.1);
  const Tensor d = delta_percent_delta(Tensor::scalar(-5), Tensor::scalar(2), s, 0, 0.0);
  CHECK(d[0] == -0.2);
  CHECK(2.0 - d[0] == 2.2);
  const Tensor guarded =
      delta_percent_delta(Tensor::scalar(-5), Tensor::scalar(2), s, 0, kDefaultEps);
  CHECK(guarded[0] == doctest::Approx(-0.2).epsilon(1e-8));
}

TEST_CASE("percent delta two-entry example") {
  const Tensor w({2}, {1, -2});
  const Tensor d = delta_percent_delta(Tensor({2}, {3, -1}), w, kUnit, 0, 0.0);
  CHECK(d[0] == doctest::Approx(12.0 / 7.0).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(-4.0 / 7.0).epsilon(1e-15));
  CHECK((std::abs(d[0] / w[0]) + std::abs(d[1] / w[1])) / 2 == doctest::Approx(1.0));
}

TEST_CASE("percent delta of a zero gradient is zero") {
  const Tensor d = delta_percent_delta(Tensor({4}), random_tensor({4}, 1), kUnit, 0, 1e-8);
  for (double v : d.data()) CHECK(v == 0.0);
}

TEST_CASE("mean relative delta equals the rate on random tensors") {
  const Schedule s = Schedule::clamped_linear(0.03, 0.01, 0.01);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng dims(seed + 500);
    const std::size_t n = 1 + dims.below(300);
    const Tensor w = signed_magnitudes({n}, seed, 1e-3, 1.0);
    const Tensor g = random_tensor({n}, seed + 1000);
    const std::int64_t t = std::int64_t(dims.below(150));
    const Tensor d = delta_percent_delta(g, w, s, t, kDefaultEps);
    REQUIRE(std::abs(mean_relative_delta(d, w, kDefaultEps) - rate(s, t)) < 1e-7);
    // Without the guard the ratio is off by at most eps / min|w|, relative.
    long double mean = 0, min_w = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
      mean += std::abs((long double)d[i] / w[i]);
      min_w = std::min<long double>(min_w, std::abs(w[i]));
    }
    mean /= n;
    REQUIRE(std::abs(double(mean) - rate(s, t)) <= rate(s, t) * double(kDefaultEps / min_w) + 1e-15);
  }
}

TEST_CASE("percent delta and lars keep the gradient direction") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor w = signed_magnitudes({64}, seed, 1e-3, 1.0);
    const Tensor g = random_tensor({64}, seed + 77);
    const Tensor pd = delta_percent_delta(g, w, kUnit, 0, kDefaultEps);
    const Tensor lars = delta_lars(g, w, kUnit, 0, kDefaultEps);
    REQUIRE(std::abs(cosine(pd, g) - 1.0) < 1e-12);
    REQUIRE(std::abs(cosine(lars, g) - 1.0) < 1e-12);
  }
}

TEST_CASE("delta functions are pure") {
  const Tensor w = random_tensor({33}, 1), g = random_tensor({33}, 2);
  const Schedule s = Schedule::clamped_linear(0.03, 0.01, 0.01);
  CHECK(same_bits(delta_percent_delta(g, w, s, 7, 1e-8), delta_percent_delta(g, w, s, 7, 1e-8)));
  CHECK(same_bits(delta_lars(g, w, s, 7, 1e-8), delta_lars(g, w, s, 7, 1e-8)));
  CHECK(same_bits(delta_sgd(g, s, 7), delta_sgd(g, s, 7)));
  Tensor s1({33}), s2({33});
  CHECK(same_bits(delta_adagrad(g, s1, s, 7, 1e-8), delta_adagrad(g, s2, s, 7, 1e-8)));
  Tensor m1({33}), v1({33}), m2({33}), v2({33});
  CHECK(same_bits(delta_adam(g, m1, v1, s, 7, 0.9, 0.999, 1e-8),
                  delta_adam(g, m2, v2, s, 7, 0.9, 0.999, 1e-8)));
}

// ---------------------------------------------------------------------------
// SGD

TEST_CASE("sgd delta") {
  CHECK(delta_sgd(Tensor({2}, {1, 2}), Schedule::constant(0.5), 0) == Tensor({2}, {0.5, 1}));
  CHECK(delta_sgd(Tensor({2}, {1, 2}), Schedule::constant(0.0), 0) == Tensor({2}));
  const Tensor g = random_tensor({40}, 5);
  Tensor g2 = g;
  for (double& v : g2.data()) v *= 2;
  const Tensor d = delta_sgd(g, Schedule::constant(0.37), 0);
  const Tensor d2 = delta_sgd(g2, Schedule::constant(0.37), 0);
  for (std::size_t i = 0; i < 40; ++i) REQUIRE(d2[i] == 2 * d[i]);
}

// ---------------------------------------------------------------------------
// AdaGrad

TEST_CASE("adagrad first step is the sign of the gradient") {
  Tensor sum({2});
  const Tensor d = delta_adagrad(Tensor({2}, {2, -1}), sum, kUnit, 0, 1e-12);
  CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(d[1] == doctest::Approx(-1.0).epsilon(1e-11));
  CHECK(sum == Tensor({2}, {4, 1}));
}

TEST_CASE("adagrad sum never decreases") {
  Tensor sum({20});
  for (std::uint64_t step = 0; step < 100; ++step) {
    const Tensor before = sum;
    delta_adagrad(random_tensor({20}, step, -5, 5), sum, kUnit, std::int64_t(step), 1e-8);
    for (std::size_t i = 0; i < 20; ++i) REQUIRE(sum[i] >= before[i]);
  }
}

TEST_CASE("adagrad steps shrink under a constant gradient") {
  Tensor sum({1});
  double previous = INFINITY;
  for (std::int64_t t = 0; t < 1000; ++t) {
    const double d = std::abs(delta_adagrad(Tensor({1}, {0.3}), sum, kUnit, t, 1e-8)[0]);
    REQUIRE(d < previous);
    // Closed form: g / sqrt((t + 1) g^2) = 1 / sqrt(t + 1).
    REQUIRE(d == doctest::Approx(1.0 / std::sqrt(double(t + 1))).epsilon(1e-7));
    previous = d;
  }
}

// ---------------------------------------------------------------------------
// Adam

TEST_CASE("adam first step is the sign of the gradient") {
  Tensor m({3}), v({3});
  const Tensor d = delta_adam(Tensor({3}, {0.5, -2, 7}), m, v, kUnit, 0, 0.9, 0.999, 1e-12);
  CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(d[1] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(d[2] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("adam with zero decay rates is a per-step sign rule") {
  Tensor m({2}), v({2});
  for (std::int64_t t = 0; t < 5; ++t) {
    const Tensor g = random_tensor({2}, std::uint64_t(t) + 1, -3, 3);
    const Tensor d = delta_adam(g, m, v, kUnit, t, 0.0, 0.0, 0.0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(d[i] == (g[i] > 0 ? 1.0 : -1.0));
  }
}

TEST_CASE("adam trace matches a scalar recurrence") {
  // Independent long-double recurrence with explicit powers.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const Schedule s = Schedule::clamped_linear(0.001, 0.05, 0.01);
  for (double g0 : {0.25, -3.0}) {
    Tensor m({1}), v({1});
    long double mo = 0, vo = 0;
    for (std::int64_t t = 0; t < 10; ++t) {
      const double g = g0 * (1.0 + 0.1 * double(t % 3));
      const double d = delta_adam(Tensor({1}, {g}), m, v, s, t, beta1, beta2, eps)[0];
      mo = beta1 * mo + (1 - (long double)beta1) * g;
      vo = beta2 * vo + (1 - (long double)beta2) * g * g;
      const long double mh = mo / (1 - std::pow((long double)beta1, t + 1));
      const long double vh = vo / (1 - std::pow((long double)beta2, t + 1));
      const long double want = 0.001L * gamma(s, t) * mh / (std::sqrt(vh) + eps);
      REQUIRE(std::abs(d - double(want)) < 1e-12);
    }
  }
  // Constant gradient: both corrected moments are exact, delta = rate * g / (|g| + eps).
  Tensor m({1}), v({1});
  for (std::int64_t t = 0; t < 10; ++t) {
    const double d = delta_adam(Tensor({1}, {0.7}), m, v, s, t, beta1, beta2, eps)[0];
    REQUIRE(std::abs(d - rate(s, t) * 0.7 / (0.7 + eps)) < 1e-12);
  }
}

// ---------------------------------------------------------------------------
// LARS

TEST_CASE("lars hand example") {
  const Tensor d =
      delta_lars(Tensor({2}, {0, 0.5}), Tensor({2}, {3, 4}), Schedule::constant(0.1), 0, 0.0);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("lars norm identity") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor w = random_tensor({30}, seed);
    const Tensor g = random_tensor({30}, seed + 1, -1e-3, 1e-3);
    const Schedule s = Schedule::constant(0.01 + 0.1 * Rng(seed).uniform());
    const Tensor d = delta_lars(g, w, s, 0, 0.0);
    const double want = s.eta * l2_norm(w);
    REQUIRE(std::abs(l2_norm(d) - want) <= 1e-12 * want);
  }
}

TEST_CASE("lars zero weight or zero gradient") {
  const Tensor zero_w = delta_lars(random_tensor({5}, 1), Tensor({5}), kUnit, 0, 1e-8);
  for (double v : zero_w.data()) CHECK(v == 0.0);
  const Tensor zero_g = delta_lars(Tensor({5}), random_tensor({5}, 1), kUnit, 0, 1e-8);
  for (double v : zero_g.data()) CHECK(v == 0.0);
}

// ---------------------------------------------------------------------------
// Momentum

TEST_CASE("momentum recurrence") {
  Tensor v({1});
  CHECK(apply_momentum(v, Tensor({1}, {1}), 0.9)[0] == 1.0);
  CHECK(apply_momentum(v, Tensor({1}, {1}), 0.9)[0] == doctest::Approx(1.9).epsilon(1e-15));
  Tensor pass({3});
  const Tensor d = random_tensor({3}, 2);
  apply_momentum(pass, random_tensor({3}, 1), 0.0);
  CHECK(apply_momentum(pass, d, 0.0) == d);
  Tensor geo({1});
  for (int i = 0; i < 500; ++i) apply_momentum(geo, Tensor({1}, {0.3}), 0.9);
  CHECK(std::abs(geo[0] - 3.0) < 1e-9);
}

// ---------------------------------------------------------------------------
// Optimizer step

TEST_CASE("step advances t once and emits one record per tensor") {
  Network net = tiny_net();
  init(net, InitPolicy{0.1, 0.1, 0});
  OptimizerState state = OptimizerState::for_network(net);
  for (auto& p : net.mutable_params()) p.grad.fill(0.5);
  const auto recs = step(UpdateRule::percent_delta(), state, net, kUnit);
  CHECK(state.t == 1);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].tensor_name == "fc/weights");
  CHECK(recs[1].tensor_name == "fc/bias");
  CHECK(recs[0].step == 0);
  step(UpdateRule::sgd(), state, net, kUnit);
  CHECK(state.t == 2);
}

TEST_CASE("step on size-1 tensors follows the scalar rule exactly") {
  Network net({1}, {LayerSpec::dense("fc", 1, 1)});
  net.mutable_params()[0].value[0] = 2.0;
  net.mutable_params()[1].value[0] = -0.4;
  OptimizerState state = OptimizerState::for_network(net);
  const Schedule s = Schedule::clamped_linear(0.03, 0.01, 0.01);
  const UpdateRule rule = UpdateRule::percent_delta(kDefaultEps, 0.0);
  double w = 2.0, b = -0.4;
  const double grads[5][2] = {{-5, 1}, {0.25, -3}, {1e-9, 2}, {-7, -7}, {0.5, 1e4}};
  for (std::int64_t t = 0; t < 5; ++t) {
    auto& params = net.mutable_params();
    params[0].grad[0] = grads[t][0];
    params[1].grad[0] = grads[t][1];
    step(rule, state, net, s);
    const double r = 0.03 * gamma(s, t);
    w -= std::copysign(r * (std::abs(w) + kDefaultEps), grads[t][0]);
    b -= std::copysign(r * (std::abs(b) + kDefaultEps), grads[t][1]);
    REQUIRE(same_bits(net.params()[0].value[0], w));
    REQUIRE(same_bits(net.params()[1].value[0], b));
  }
}

TEST_CASE("step records hold the raw and applied deltas") {
  Network net = tiny_net();
  init(net, InitPolicy{0.1, 0.1, 3});
  for (auto& p : net.mutable_params()) p.grad = random_tensor(p.value.shape(), 4);
  const Network before = net;
  OptimizerState state = OptimizerState::for_network(net);
  const Schedule s = Schedule::clamped_linear(0.03, 0.01, 0.01);
  const auto first = step(UpdateRule::percent_delta(), state, net, s);
  for (std::size_t i = 0; i < first.size(); ++i) {
    const Parameter& p = before.params()[i];
    const StepRecord& rec = first[i];
    const Tensor d = delta_percent_delta(p.grad, p.value, s, 0, kDefaultEps);
    CHECK(rec.l1_w == l1_norm(p.value));
    CHECK(rec.l1_delta_raw == l1_norm(d));
    CHECK(rec.l1_delta_applied == rec.l1_delta_raw);  // velocity starts at zero
    CHECK(rec.rel_delta_raw == rec.l1_delta_raw / rec.l1_w);
    CHECK(rec.mean_rel_delta_raw == doctest::Approx(0.03).epsilon(1e-7));
    CHECK(rec.multiplier == pd_multiplier(p.grad, p.value, kDefaultEps));
    CHECK(rec.gamma == 1.0);
  }
  // Same grads again: the applied update now carries momentum.
  const auto second = step(UpdateRule::percent_delta(), state, net, s);
  for (const StepRecord& rec : second) {
    CHECK(rec.step == 1);
    CHECK(rec.gamma == gamma(s, 1));
    CHECK(rec.l1_delta_applied > rec.l1_delta_raw);
  }
}

TEST_CASE("sgd steps on frozen grads add up") {
  Network one = tiny_net(), two = tiny_net();
  init(one, InitPolicy{0.1, 0.1, 5});
  init(two, InitPolicy{0.1, 0.1, 5});
  for (Network* n : {&one, &two}) {
    for (auto& p : n->mutable_params()) p.grad = Tensor(p.value.shape(), 0.375);
  }
  OptimizerState s1 = OptimizerState::for_network(one), s2 = OptimizerState::for_network(two);
  step(UpdateRule::sgd(), s1, one, Schedule::constant(0.25));
  step(UpdateRule::sgd(), s1, one, Schedule::constant(0.25));
  step(UpdateRule::sgd(), s2, two, Schedule::constant(0.5));
  for (std::size_t i = 0; i < one.params().size(); ++i) {
    CHECK(same_bits(one.params()[i].value, two.params()[i].value));
  }
}

TEST_CASE("only momentum, lars and percent delta accumulate velocity") {
  CHECK(UpdateRule::percent_delta().uses_momentum());
  CHECK(UpdateRule::lars().uses_momentum());
  CHECK(UpdateRule::momentum().uses_momentum());
  CHECK_FALSE(UpdateRule::sgd().uses_momentum());
  CHECK_FALSE(UpdateRule::adagrad().uses_momentum());
  CHECK_FALSE(UpdateRule::adam().uses_momentum());
  for (UpdateRule rule : {UpdateRule::sgd(), UpdateRule::adagrad(), UpdateRule::adam()}) {
    Network net = tiny_net();
    init(net, InitPolicy{0.1, 0.1, 1});
    for (auto& p : net.mutable_params()) p.grad.fill(1.0);
    OptimizerState state = OptimizerState::for_network(net);
    step(rule, state, net, kUnit);
    const auto recs = step(rule, state, net, kUnit);
    for (const StepRecord& rec : recs) CHECK(rec.l1_delta_applied == rec.l1_delta_raw);
  }
}

TEST_CASE("step rejects a tensor missing from the state") {
  Network net = tiny_net();
  OptimizerState state;
  CHECK_THROWS_AS(step(UpdateRule::sgd(), state, net, kUnit), std::out_of_range);
}

TEST_CASE("rule validation") {
  CHECK_THROWS(UpdateRule::percent_delta(0.0).validate());
  CHECK_THROWS(UpdateRule::momentum(1.0).validate());
  CHECK_THROWS(UpdateRule::adam(1.0).validate());
  CHECK_NOTHROW(UpdateRule::adam().validate());
}
