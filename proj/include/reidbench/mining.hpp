/*
 * Copyright 2026 The reid-bench Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "reidbench/catalog.hpp"
#include "reidbench/models.hpp"

namespace reidbench {

struct PairSample {
  std::string image_id_1;
  std::string image_id_2;
  int label = 0;  // 1 = same patient

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairSet {
  std::vector<PairSample> pairs;
  std::string source_split;
  bool balanced = false;

  size_t size() const { return pairs.size(); }
  size_t positives() const;
};

enum class MiningMode { kFixed, kRandomizedNegatives };  // FTS, RNP

struct MiningConfig {
  MiningMode mode = MiningMode::kRandomizedNegatives;
  /// Total pairs N_s (half positive). 0 uses every positive pair.
  size_t target_size = 0;
  std::uint64_t seed = 0;
};

/// All C(k,2) same-patient pairs per patient, in manifest order.
PairSet mine_positive_pairs(const Manifest& manifest);

/// `count` distinct unordered cross-patient pairs drawn uniformly over
/// image pairs. Throws if fewer than `count` such pairs exist.
PairSet sample_negative_pairs(const Manifest& manifest, size_t count, std::uint64_t seed);

/// Balanced training set. FTS output depends only on (manifest, seed); RNP
/// redraws negatives per epoch with positives held fixed.
PairSet build_training_pairs(const Manifest& manifest, const MiningConfig& config, int epoch);

/// Every positive pair plus an equal number of seeded negatives.
PairSet build_evaluation_pairs(const Manifest& manifest, std::uint64_t seed);

/// Throws SchemaError naming the first pair whose label disagrees with the
/// manifest, or which references an unknown image.
void validate_pair_labels(const PairSet& pairs, const Manifest& manifest);

/// CSV `image_id_1,image_id_2,label` with header.
std::string serialize_pairs(const PairSet& pairs);
PairSet parse_pairs(std::string_view text);

// ---------------------------------------------------------------- online mining

template <typename Scalar>
struct MemoryEntry {
  Embedding<Scalar> embedding;
  std::string patient_id;
  std::int64_t step = 0;
};

/// FIFO store of detached embeddings from recent batches.
template <typename Scalar>
class CrossBatchMemory {
 public:
  explicit CrossBatchMemory(size_t capacity) : capacity_(capacity) {}

  size_t capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const MemoryEntry<Scalar>& operator[](size_t i) const { return entries_[i]; }
  const std::deque<MemoryEntry<Scalar>>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Appends the columns of `embeddings` (oldest first), evicting the
  /// oldest entries beyond capacity.
  void push(const MatrixX<Scalar>& embeddings, const std::vector<std::string>& patient_ids,
            std::int64_t step) {
    if (embeddings.rows() != kEmbeddingDim ||
        embeddings.cols() != static_cast<Index>(patient_ids.size()))
      throw ShapeError("memory push expects 128xB embeddings and B patient ids");
    if (!entries_.empty() && step < entries_.back().step)
      throw Error("memory steps must be non-decreasing");
    for (Index i = 0; i < embeddings.cols(); ++i) {
      if (capacity_ == 0) break;
      entries_.push_back({embeddings.col(i), patient_ids[static_cast<size_t>(i)], step});
      if (entries_.size() > capacity_) entries_.pop_front();
    }
  }

 private:
  size_t capacity_;
  std::deque<MemoryEntry<Scalar>> entries_;
};

struct MinedPair {
  Index first = 0;          // batch position
  Index second = 0;         // batch position, or memory position if in_memory
  bool in_memory = false;
  int label = 0;
};

/// All within-batch unordered pairs, then every (batch, memory) pair.
template <typename Scalar>
std::vector<MinedPair> enumerate_batch_pairs(const std::vector<std::string>& batch_patients,
                                             const CrossBatchMemory<Scalar>& memory) {
  if (batch_patients.empty()) throw Error("enumerate_batch_pairs needs a non-empty batch");
  const Index b = static_cast<Index>(batch_patients.size());
  std::vector<MinedPair> out;
  out.reserve(static_cast<size_t>(b * (b - 1) / 2 + b * static_cast<Index>(memory.size())));
  for (Index i = 0; i < b; ++i)
    for (Index j = i + 1; j < b; ++j)
      out.push_back({i, j, false, batch_patients[size_t(i)] == batch_patients[size_t(j)]});
  for (Index i = 0; i < b; ++i)
    for (size_t m = 0; m < memory.size(); ++m)
      out.push_back({i, static_cast<Index>(m), true,
                     batch_patients[size_t(i)] == memory[m].patient_id});
  return out;
}

}  // namespace reidbench
