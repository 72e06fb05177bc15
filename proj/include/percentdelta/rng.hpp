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

#pragma once

#include <cstdint>

namespace pdelta {

/// xoshiro256** (Blackman & Vigna), seeded by expanding a 64-bit seed with
/// SplitMix64 (increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9
/// and 0x94D049BB133111EB). Streams are identical on every platform.
///
/// Derived values:
///  - uniform(): top 53 bits scaled by 2^-53, in [0, 1).
///  - below(n): Lemire's multiply-shift with rejection, unbiased.
///  - normal(): Marsaglia polar method; one value per accepted pair, the
///    second is discarded.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Independent stream for a (seed, salt) pair, e.g. one per epoch.
  static Rng derive(std::uint64_t seed, std::uint64_t salt);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace pdelta
