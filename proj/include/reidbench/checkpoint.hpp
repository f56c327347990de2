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

#include <filesystem>
#include <string>
#include <vector>

#include "reidbench/models.hpp"

namespace reidbench {

enum class ModelKind { kVerification, kEmbedding };

/// One named parameter block inside the flat parameter vector.
struct TensorEntry {
  std::string name;  // "<layer>.weight", "<layer>.bias", "head.weight", ...
  std::vector<Index> shape;
  Index offset = 0;
  Index count = 0;
};

struct CheckpointMeta {
  ModelKind kind = ModelKind::kVerification;
  size_t epoch = 0;
  long long global_step = 0;
};

template <typename Scalar>
std::vector<TensorEntry> tensor_layout(const VerificationNet<Scalar>& model);
template <typename Scalar>
std::vector<TensorEntry> tensor_layout(const EmbeddingNet<Scalar>& model);

/// Writes the model spec, tensor table and parameters (stored as float64).
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const VerificationNet<Scalar>& model,
                     CheckpointMeta meta = {});
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet<Scalar>& model,
                     CheckpointMeta meta = {});

/// Rebuilds the model from its stored spec. Throws LoadError on a corrupt
/// or mismatched file.
template <typename Scalar>
VerificationNet<Scalar> load_verification_checkpoint(const std::filesystem::path& path,
                                                     CheckpointMeta* meta = nullptr);
template <typename Scalar>
EmbeddingNet<Scalar> load_embedding_checkpoint(const std::filesystem::path& path,
                                               CheckpointMeta* meta = nullptr);

/// Kind stored in a checkpoint without loading its parameters.
ModelKind checkpoint_kind(const std::filesystem::path& path);

/// Content hash used to tag indexes built from a checkpoint.
std::string checkpoint_id(const std::filesystem::path& path);

}  // namespace reidbench
