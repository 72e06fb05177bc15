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

#include <algorithm>
#include <cmath>
#include <string>

#include "percentdelta/ops.hpp"

namespace pdelta {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  gemm(Transpose::kNo, Transpose::kNo, m, n, k, a.raw(), k, b.raw(), n, out.raw(), n, false);
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double l1_norm(const Tensor& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += std::abs(v);
  return sum;
}

double l2_norm(const Tensor& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_mask(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Branch on sign so exp never overflows.
    const double v = x[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor sigmoid_deriv(const Tensor& y) {
  Tensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (1.0 - y[i]);
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t batch, height, width, in_ch, kh, kw, out_ch, pad_top, pad_left;
  std::size_t patch() const { return kh * kw * in_ch; }
  std::size_t pixels() const { return height * width; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: expected x [B,H,W,C] and kernel [kh,kw,Cin,Cout], got " +
                     shape_string(x.shape()) + " and " + shape_string(kernel.shape()));
  }
  if (x.dim(3) != kernel.dim(2)) {
    throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(x.dim(3)) +
                     " channels but kernel expects " + std::to_string(kernel.dim(2)));
  }
  ConvGeometry g{x.dim(0),      x.dim(1),      x.dim(2), x.dim(3), kernel.dim(0),
                 kernel.dim(1), kernel.dim(3), 0,        0};
  // SAME padding: the extra row/column of an even kernel goes to the bottom/right.
  g.pad_top = (g.kh - 1) / 2;
  g.pad_left = (g.kw - 1) / 2;
  return g;
}

// Images per im2col chunk; bounds the scratch buffer for large batches.
constexpr std::size_t kConvChunk = 32;

// Rows of `cols` are output pixels of images [b0, b0 + nb); columns follow the
// kernel layout (dy, dx, cin).
void im2col(const ConvGeometry& g, const double* x, std::size_t b0, std::size_t nb, double* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t b = b0; b < b0 + nb; ++b) {
    const double* img = x + b * g.height * g.width * g.in_ch;
    for (std::size_t oy = 0; oy < g.height; ++oy) {
      for (std::size_t ox = 0; ox < g.width; ++ox) {
        double* row = cols;
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + dy) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t dx = 0; dx < g.kw; ++dx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + dx) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                ix >= static_cast<std::ptrdiff_t>(g.width)) {
              std::fill(row, row + g.in_ch, 0.0);
            } else {
              const double* src = img + (static_cast<std::size_t>(iy) * g.width +
                                         static_cast<std::size_t>(ix)) * g.in_ch;
              std::copy(src, src + g.in_ch, row);
            }
            row += g.in_ch;
          }
        }
        cols += patch;
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, std::size_t b0, std::size_t nb,
                double* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t b = b0; b < b0 + nb; ++b) {
    double* img = dx + b * g.height * g.width * g.in_ch;
    for (std::size_t oy = 0; oy < g.height; ++oy) {
      for (std::size_t ox = 0; ox < g.width; ++ox) {
        const double* row = cols;
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + dy) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t dxk = 0; dxk < g.kw; ++dxk) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + dxk) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                ix < static_cast<std::ptrdiff_t>(g.width)) {
              double* dst = img + (static_cast<std::size_t>(iy) * g.width +
                                   static_cast<std::size_t>(ix)) * g.in_ch;
              for (std::size_t c = 0; c < g.in_ch; ++c) dst[c] += row[c];
            }
            row += g.in_ch;
          }
        }
        cols += patch;
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const ConvGeometry g = conv_geometry(x, kernel);
  if (bias.rank() != 1 || bias.dim(0) != g.out_ch) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(g.out_ch) + " output channels");
  }
  Tensor out({g.batch, g.height, g.width, g.out_ch});
  // Scratch buffers are kept per thread; they are large enough that fresh
  // allocations would cost a page fault per 4 KiB on every call.
  thread_local std::vector<double> cols;
  cols.resize(std::min(kConvChunk, g.batch) * g.pixels() * g.patch());
  for (std::size_t b0 = 0; b0 < g.batch; b0 += kConvChunk) {
    const std::size_t nb = std::min(kConvChunk, g.batch - b0);
    const std::size_t rows = nb * g.pixels();
    im2col(g, x.raw(), b0, nb, cols.data());
    double* dst = out.raw() + b0 * g.pixels() * g.out_ch;
    gemm(Transpose::kNo, Transpose::kNo, rows, g.out_ch, g.patch(), cols.data(), g.patch(),
         kernel.raw(), g.out_ch, dst, g.out_ch, false);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < g.out_ch; ++c) dst[r * g.out_ch + c] += bias[c];
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                            bool want_dx) {
  const ConvGeometry g = conv_geometry(x, kernel);
  const Shape expected{g.batch, g.height, g.width, g.out_ch};
  if (dout.shape() != expected) {
    throw ShapeError("conv2d_backward: dout shape " + shape_string(dout.shape()) +
                     " does not match " + shape_string(expected));
  }
  Conv2dGrads grads{want_dx ? Tensor(x.shape()) : Tensor(Shape{0}), Tensor(kernel.shape()),
                    Tensor(Shape{g.out_ch})};
  thread_local std::vector<double> cols;
  thread_local std::vector<double> dcols;
  cols.resize(std::min(kConvChunk, g.batch) * g.pixels() * g.patch());
  if (want_dx) dcols.resize(cols.size());
  for (std::size_t b0 = 0; b0 < g.batch; b0 += kConvChunk) {
    const std::size_t nb = std::min(kConvChunk, g.batch - b0);
    const std::size_t rows = nb * g.pixels();
    const double* dsrc = dout.raw() + b0 * g.pixels() * g.out_ch;
    im2col(g, x.raw(), b0, nb, cols.data());
    // dkernel[patch, out] += cols^T * dout, accumulated over chunks in batch order.
    gemm(Transpose::kYes, Transpose::kNo, g.patch(), g.out_ch, rows, cols.data(), g.patch(), dsrc,
         g.out_ch, grads.dkernel.raw(), g.out_ch, b0 > 0);
    if (want_dx) {
      gemm(Transpose::kNo, Transpose::kYes, rows, g.patch(), g.out_ch, dsrc, g.out_ch,
           kernel.raw(), g.out_ch, dcols.data(), g.patch(), false);
      col2im_add(g, dcols.data(), b0, nb, grads.dx.raw());
    }
  }
  const std::size_t total_rows = g.batch * g.pixels();
  for (std::size_t r = 0; r < total_rows; ++r) {
    for (std::size_t c = 0; c < g.out_ch; ++c) grads.dbias[c] += dout[r * g.out_ch + c];
  }
  return grads;
}

MaxPoolResult maxpool2_forward(const Tensor& x) {
  if (x.rank() != 4) {
    throw ShapeError("maxpool2: expected [B,H,W,C], got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), ch = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2: spatial dims must be even, got " + shape_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult result{Tensor({batch, oh, ow, ch}), std::vector<std::size_t>(batch * oh * ow * ch)};
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        for (std::size_t c = 0; c < ch; ++c, ++o) {
          // Window entries visited in increasing flat-index order; strict '>'
          // keeps the first maximum.
          std::size_t best = ((b * h + 2 * y) * w + 2 * xo) * ch + c;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((b * h + 2 * y + dy) * w + 2 * xo + dx) * ch + c;
              if (x[idx] > x[best]) best = idx;
            }
          }
          result.out[o] = x[best];
          result.argmax[o] = best;
        }
      }
    }
  }
  return result;
}

Tensor maxpool2_backward(const Tensor& dout, std::span<const std::size_t> argmax,
                         const Shape& input_shape) {
  if (argmax.size() != dout.size()) {
    throw ShapeError("maxpool2_backward: argmax map has " + std::to_string(argmax.size()) +
                     " entries for " + std::to_string(dout.size()) + " gradients");
  }
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < dout.size(); ++i) dx[argmax[i]] += dout[i];
  return dx;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_xent: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  SoftmaxXent result{0.0, Tensor(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("softmax_xent: label " + std::to_string(label) + " at row " +
                              std::to_string(b) + " outside [0, " + std::to_string(classes) + ")");
    }
    const double* row = logits.raw() + b * classes;
    double* grad = result.dlogits.raw() + b * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(row[k] - peak);
    const double log_denom = std::log(denom);
    result.loss += log_denom - (row[label] - peak);
    for (std::size_t k = 0; k < classes; ++k) {
      const double p = std::exp(row[k] - peak - log_denom);
      grad[k] = (p - (static_cast<std::size_t>(label) == k ? 1.0 : 0.0)) * inv_batch;
    }
  }
  result.loss *= inv_batch;
  return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.raw() + b * classes;
    out[b] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

}  // namespace pdelta
