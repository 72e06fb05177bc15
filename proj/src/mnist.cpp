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

#include "percentdelta/mnist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "percentdelta/rng.hpp"

namespace pdelta {

IdxError::IdxError(Kind kind, std::size_t offset, const std::string& message)
    : std::runtime_error(message + " (byte offset " + std::to_string(offset) + ")"),
      kind_(kind),
      offset_(offset) {}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw IdxError(IdxError::Kind::kTruncated, bytes.size(),
                   "IDX header truncated: need " + std::to_string(offset + 4) + " bytes, have " +
                       std::to_string(bytes.size()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void expect_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected) {
    throw IdxError(IdxError::Kind::kBadMagic, 0,
                   "IDX bad magic " + std::to_string(magic) + ", expected " +
                       std::to_string(expected));
  }
}

// Checks that `count` records of `record` bytes follow the header.
void expect_payload(std::span<const std::uint8_t> bytes, std::size_t header, std::size_t count,
                    std::size_t record, const char* what) {
  const std::size_t available = bytes.size() - header;
  if (record == 0 ? false : available / record < count) {
    const std::size_t complete = available / record;
    throw IdxError(IdxError::Kind::kTruncated, header + complete * record,
                   std::string("IDX ") + what + " truncated: header declares " +
                       std::to_string(count) + " records but only " + std::to_string(complete) +
                       " are complete");
  }
}

}  // namespace

Tensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  expect_magic(bytes, kIdxImagesMagic);
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  std::size_t record = 0;
  std::size_t total = 0;
  if (__builtin_mul_overflow(rows, cols, &record) ||
      __builtin_mul_overflow(record, count, &total) || total > (std::size_t{1} << 40)) {
    throw IdxError(IdxError::Kind::kDimensionOverflow, 4,
                   "IDX image dimensions " + std::to_string(count) + "x" + std::to_string(rows) +
                       "x" + std::to_string(cols) + " overflow");
  }
  expect_payload(bytes, 16, count, record, "images");
  Tensor images({count, rows, cols, 1});
  const std::uint8_t* src = bytes.data() + 16;
  for (std::size_t i = 0; i < total; ++i) images[i] = static_cast<double>(src[i]) / 255.0;
  return images;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  expect_magic(bytes, kIdxLabelsMagic);
  const std::size_t count = read_be32(bytes, 4);
  expect_payload(bytes, 8, count, 1, "labels");
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t v = bytes[8 + i];
    if (v > 9) {
      throw IdxError(IdxError::Kind::kBadValue, 8 + i,
                     "IDX label " + std::to_string(v) + " outside [0, 10)");
    }
    labels[i] = v;
  }
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(3) != 1) {
    throw ShapeError("serialize_idx_images: expected [N, rows, cols, 1], got " +
                     shape_string(images.shape()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  write_be32(out, kIdxImagesMagic);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    write_be32(out, static_cast<std::uint32_t>(images.dim(axis)));
  }
  for (double v : images.data()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int v : labels) out.push_back(static_cast<std::uint8_t>(v));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto [x, y] = gather(idx);
  return {std::move(x), std::move(y)};
}

std::pair<Tensor, std::vector<int>> Dataset::gather(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t per_example = element_count(shape) / std::max<std::size_t>(shape[0], 1);
  shape[0] = indices.size();
  Tensor x(shape);
  std::vector<int> y(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw std::out_of_range("dataset index " + std::to_string(src));
    std::copy_n(images.raw() + src * per_example, per_example, x.raw() + i * per_example);
    y[i] = labels[src];
  }
  return {std::move(x), std::move(y)};
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset: images " + shape_string(images.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset: pixel outside [0, 1]");
  }
  for (int l : labels) {
    if (l < 0 || l > 9) throw std::invalid_argument("dataset: label outside [0, 10)");
  }
}

Dataset load_mnist(const std::filesystem::path& dir, Split split,
                   std::optional<std::size_t> limit) {
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  const auto image_path = dir / (prefix + "-images-idx3-ubyte");
  const auto label_path = dir / (prefix + "-labels-idx1-ubyte");
  Dataset ds;
  try {
    ds.images = parse_idx_images(read_file_bytes(image_path));
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), e.offset(), image_path.string() + ": " + e.what());
  }
  try {
    ds.labels = parse_idx_labels(read_file_bytes(label_path));
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), e.offset(), label_path.string() + ": " + e.what());
  }
  if (ds.images.dim(1) != 28 || ds.images.dim(2) != 28) {
    throw std::runtime_error(image_path.string() + ": expected 28x28 images, got " +
                             shape_string(ds.images.shape()));
  }
  if (ds.images.dim(0) != ds.labels.size()) {
    throw std::runtime_error(dir.string() + ": " + std::to_string(ds.images.dim(0)) +
                             " images but " + std::to_string(ds.labels.size()) + " labels");
  }
  if (limit && *limit < ds.size()) ds = ds.head(*limit);
  return ds;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be positive");
  if (batch_size > n) {
    throw std::invalid_argument("batches: batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, epoch);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Dataset synthetic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("synthetic: n must be positive");
  constexpr std::size_t kSide = 28;
  constexpr double kPi = 3.14159265358979323846;
  Dataset ds{Tensor({n, kSide, kSide, 1}), std::vector<int>(n)};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    ds.labels[i] = label;
    // A stroke from near the centre towards a class-specific direction.
    const double angle = 2.0 * kPi * label / 10.0 + 0.15 * (rng.uniform() - 0.5);
    const double cx = 13.5 + 3.0 * (rng.uniform() - 0.5);
    const double cy = 13.5 + 3.0 * (rng.uniform() - 0.5);
    const double length = 8.0 + 2.0 * rng.uniform();
    const double amplitude = 0.75 + 0.25 * rng.uniform();
    double* img = ds.images.raw() + i * kSide * kSide;
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) {
          const double s = length * (0.1 + 0.3 * k);
          const double px = cx + s * std::cos(angle);
          const double py = cy + s * std::sin(angle);
          const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
          v = std::max(v, amplitude * std::exp(-d2 / (2.0 * 1.6 * 1.6)));
        }
        v += 0.08 * rng.uniform();
        img[y * kSide + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return ds;
}

}  // namespace pdelta
