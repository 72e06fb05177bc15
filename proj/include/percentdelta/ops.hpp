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

// Forward and backward kernels shared by the layers and the update rules.
// Every kernel is single-threaded and deterministic: identical inputs give
// bit-identical outputs.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "percentdelta/tensor.hpp"

namespace pdelta {

enum class Transpose { kNo, kYes };

/// Row-major GEMM: c = op(a) * op(b), or c += op(a) * op(b) when accumulate
/// is set. op(a) is m x k and op(b) is k x n. Each output entry is summed
/// over k in increasing order, starting from its previous value when
/// accumulating.
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);

double l1_norm(const Tensor& a);
double l2_norm(const Tensor& a);

Tensor relu(const Tensor& x);
/// 1 where x > 0, else 0. The derivative at zero is taken as 0.
Tensor relu_mask(const Tensor& x);

Tensor sigmoid(const Tensor& x);
/// Logistic derivative expressed through the sigmoid output y: y * (1 - y).
Tensor sigmoid_deriv(const Tensor& y);

/// SAME-padded, stride-1 cross-correlation over NHWC input.
/// x: [B, H, W, Cin], kernel: [kh, kw, Cin, Cout], bias: [Cout].
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;
};

/// Gradients of conv2d_forward given dout: [B, H, W, Cout]. dx is left empty
/// (shape [0]) when want_dx is false.
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                            bool want_dx = true);

struct MaxPoolResult {
  Tensor out;
  /// Flat input index of the maximum chosen for each output entry.
  std::vector<std::size_t> argmax;
};

/// 2x2 window, stride 2, over NHWC input with even H and W. Ties resolve to
/// the lowest flat index.
MaxPoolResult maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Tensor& dout, std::span<const std::size_t> argmax,
                         const Shape& input_shape);

struct SoftmaxXent {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean softmax cross-entropy over a [B, K] batch, with the gradient
/// (softmax - onehot) / B. Uses log-sum-exp so large logits stay finite.
SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels);

/// Row-wise argmax of a [B, K] tensor (first maximum wins).
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace pdelta
