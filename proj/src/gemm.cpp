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

// Packed, register-blocked GEMM. The k loop is never split across
// accumulators, so every output entry is a plain left-to-right sum and the
// result does not depend on the blocking parameters.

#include <algorithm>
#include <cstring>
#include <vector>

#include "percentdelta/ops.hpp"

namespace pdelta {
namespace {

#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
#else
constexpr std::size_t kLanes = 4;
#endif

typedef double Vec __attribute__((vector_size(kLanes * sizeof(double))));

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 2 * kLanes;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 512;

inline Vec load(const double* p) {
  Vec v;
  std::memcpy(&v, p, sizeof(Vec));
  return v;
}

inline void store(double* p, const Vec& v) { std::memcpy(p, &v, sizeof(Vec)); }

// Computes a kMr x kNr tile. `c` points to a full tile of stride ldc.
void micro_kernel(std::size_t kc, const double* pa, const double* pb, double* c, std::size_t ldc,
                  bool load_c) {
  Vec acc[kMr][2];
  for (std::size_t i = 0; i < kMr; ++i) {
    if (load_c) {
      acc[i][0] = load(c + i * ldc);
      acc[i][1] = load(c + i * ldc + kLanes);
    } else {
      acc[i][0] = Vec{};
      acc[i][1] = Vec{};
    }
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const Vec b0 = load(pb);
    const Vec b1 = load(pb + kLanes);
    for (std::size_t i = 0; i < kMr; ++i) {
      acc[i][0] += pa[i] * b0;
      acc[i][1] += pa[i] * b1;
    }
    pa += kMr;
    pb += kNr;
  }
  for (std::size_t i = 0; i < kMr; ++i) {
    store(c + i * ldc, acc[i][0]);
    store(c + i * ldc + kLanes, acc[i][1]);
  }
}

struct Operand {
  const double* data;
  std::size_t ld;
  bool trans;
  double operator()(std::size_t row, std::size_t col) const {
    return trans ? data[col * ld + row] : data[row * ld + col];
  }
};

void pack_a(const Operand& a, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc,
            double* out) {
  for (std::size_t r0 = 0; r0 < mc; r0 += kMr) {
    const std::size_t rows = std::min(kMr, mc - r0);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t i = 0; i < kMr; ++i) {
        *out++ = i < rows ? a(i0 + r0 + i, p0 + p) : 0.0;
      }
    }
  }
}

void pack_b(const Operand& b, std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nc,
            double* out) {
  for (std::size_t c0 = 0; c0 < nc; c0 += kNr) {
    const std::size_t cols = std::min(kNr, nc - c0);
    for (std::size_t p = 0; p < kc; ++p) {
      if (!b.trans && cols == kNr) {
        std::memcpy(out, b.data + (p0 + p) * b.ld + j0 + c0, kNr * sizeof(double));
        out += kNr;
        continue;
      }
      for (std::size_t j = 0; j < kNr; ++j) {
        *out++ = j < cols ? b(p0 + p, j0 + c0 + j) : 0.0;
      }
    }
  }
}

}  // namespace

void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  const Operand opa{a, lda, trans_a == Transpose::kYes};
  const Operand opb{b, ldb, trans_b == Transpose::kYes};

  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;
  packed_a.resize(((kMc + kMr - 1) / kMr) * kMr * kKc);
  packed_b.resize(((kNc + kNr - 1) / kNr) * kNr * kKc);
  double edge[kMr * kNr] = {};

  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, k - p0);
      const bool load_c = accumulate || p0 > 0;
      pack_b(opb, p0, kc, j0, nc, packed_b.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
        const std::size_t mc = std::min(kMc, m - i0);
        pack_a(opa, i0, mc, p0, kc, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t cols = std::min(kNr, nc - jr);
          const double* pb = packed_b.data() + (jr / kNr) * kNr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            const double* pa = packed_a.data() + (ir / kMr) * kMr * kc;
            double* ctile = c + (i0 + ir) * ldc + j0 + jr;
            if (rows == kMr && cols == kNr) {
              micro_kernel(kc, pa, pb, ctile, ldc, load_c);
              continue;
            }
            if (load_c) {
              for (std::size_t i = 0; i < rows; ++i) {
                std::copy(ctile + i * ldc, ctile + i * ldc + cols, edge + i * kNr);
              }
            }
            micro_kernel(kc, pa, pb, edge, kNr, load_c);
            for (std::size_t i = 0; i < rows; ++i) {
              std::copy(edge + i * kNr, edge + i * kNr + cols, ctile + i * ldc);
            }
          }
        }
      }
    }
  }
}

}  // namespace pdelta
