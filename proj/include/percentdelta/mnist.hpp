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

// MNIST ingestion (IDX container), batching and a procedural stand-in
// dataset.
//
// IDX layout: a big-endian u32 magic (0x00000803 = 2051 for images,
// 0x00000801 = 2049 for labels), one big-endian u32 per dimension, then the
// unsigned-byte payload in row-major order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "percentdelta/tensor.hpp"

namespace pdelta {

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kTruncated, kDimensionOverflow, kBadValue };

  IdxError(Kind kind, std::size_t offset, const std::string& message);

  Kind kind() const noexcept { return kind_; }
  /// Byte offset the problem was detected at.
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

/// [N, rows, cols, 1] with pixels scaled by 1/255.
Tensor parse_idx_images(std::span<const std::uint8_t> bytes);
/// Labels must lie in [0, 10).
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Inverse of the parsers. Pixels are rounded back to bytes.
std::vector<std::uint8_t> serialize_idx_images(const Tensor& images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

struct Dataset {
  Tensor images{Shape{0, 28, 28, 1}};
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// The first n examples (all of them if n >= size()).
  Dataset head(std::size_t n) const;
  /// Images and labels of the given examples, in the given order.
  std::pair<Tensor, std::vector<int>> gather(std::span<const std::size_t> indices) const;
  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

enum class Split { kTrain, kTest };

/// Loads train-{images-idx3,labels-idx1}-ubyte or the t10k-* pair from `dir`.
/// `limit` keeps only the first examples.
Dataset load_mnist(const std::filesystem::path& dir, Split split,
                   std::optional<std::size_t> limit = std::nullopt);

/// Seeded shuffle of 0..n-1 for one epoch, cut into batches; the final
/// partial batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

/// Procedural 28x28 class-conditional images: example i has label i % 10 and
/// shows a Gaussian stroke pattern specific to its class, jittered and
/// noised from `seed`.
Dataset synthetic(std::size_t n, std::uint64_t seed);

}  // namespace pdelta
