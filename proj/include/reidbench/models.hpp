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
#include <string>
#include <vector>

#include "reidbench/nn/sequential.hpp"

namespace reidbench {

inline constexpr Index kEmbeddingDim = 128;

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, kEmbeddingDim, 1>;

/// conv(kernel, stride, padding) -> ReLU
struct ConvBlock {
  Index channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct TrunkSpec {
  std::string name;
  std::vector<ConvBlock> blocks;
  friend bool operator==(const TrunkSpec&, const TrunkSpec&) = default;
};

/// Built-in trunks by name. Throws ConfigError listing the valid names.
TrunkSpec registered_trunk(std::string_view name);
std::vector<std::string> registered_trunk_names();

/// Twin-branch verifier: shared encoder -> sigmoid -> |z1 - z2| -> FC -> sigmoid.
struct VerificationNetSpec {
  TrunkSpec trunk = registered_trunk("toy");
  Index resolution = 256;
  /// Trunk output is average-pooled to pool×pool before the 128-unit FC
  /// (1 = global pooling).
  Index pool = 1;
};

/// Retrieval encoder: trunk -> [adaptive avg ‖ adaptive max] pool×pool ->
/// 1×1 conv -> flatten -> FC -> ReLU -> FC(128).
struct EmbeddingNetSpec {
  TrunkSpec trunk = registered_trunk("toy");
  Index resolution = 1024;
  Index pool = 5;
  Index reduce_channels = 100;
  Index hidden = 256;
};

namespace detail {
template <typename Scalar>
void add_trunk(nn::Sequential<Scalar>& seq, const TrunkSpec& trunk);
}

template <typename Scalar>
class VerificationNet {
 public:
  explicit VerificationNet(VerificationNetSpec spec);

  const VerificationNetSpec& spec() const { return spec_; }
  const nn::Sequential<Scalar>& encoder() const { return encoder_; }

  VectorX<Scalar>& parameters() { return params_; }
  const VectorX<Scalar>& parameters() const { return params_; }
  Index parameter_count() const { return params_.size(); }
  /// Parameters [0, trunk_parameter_count()) belong to the trunk.
  Index trunk_parameter_count() const { return trunk_end_; }
  Scalar head_bias() const { return params_[params_.size() - 1]; }

  void initialize(std::uint64_t seed);

  /// Throws ShapeError unless x is B×3×R×R with R the configured resolution.
  void check_input(const FeatureMaps<Scalar>& x) const;

  /// Encoder outputs, kEmbeddingDim × batch.
  MatrixX<Scalar> encode(const FeatureMaps<Scalar>& x) const;
  /// Scores column-paired encoder outputs.
  RowVectorX<Scalar> score(const MatrixX<Scalar>& z1, const MatrixX<Scalar>& z2) const;
  /// Score in (0,1) for one image pair.
  Scalar forward(const FeatureMaps<Scalar>& x1, const FeatureMaps<Scalar>& x2) const;

  /// Mean BCE over the batch; adds d(loss)/d(params) into `grad`.
  Scalar bce_loss_and_gradient(const FeatureMaps<Scalar>& x1, const FeatureMaps<Scalar>& x2,
                               std::span<const int> labels, VectorX<Scalar>& grad) const;

  /// Backpropagates d(output)/d(z) for one encoded input; used by Grad-CAM.
  RowVectorX<Scalar> score_gradient_wrt_encodings(const MatrixX<Scalar>& z1,
                                                  const MatrixX<Scalar>& z2,
                                                  MatrixX<Scalar>& dz1,
                                                  MatrixX<Scalar>& dz2) const;

 private:
  VerificationNetSpec spec_;
  nn::Sequential<Scalar> encoder_;
  Index trunk_end_ = 0;
  VectorX<Scalar> params_;
};

template <typename Scalar>
class EmbeddingNet {
 public:
  explicit EmbeddingNet(EmbeddingNetSpec spec);

  const EmbeddingNetSpec& spec() const { return spec_; }
  const nn::Sequential<Scalar>& encoder() const { return encoder_; }

  VectorX<Scalar>& parameters() { return params_; }
  const VectorX<Scalar>& parameters() const { return params_; }
  Index parameter_count() const { return params_.size(); }
  Index trunk_parameter_count() const { return trunk_end_; }

  void initialize(std::uint64_t seed);

  /// Throws ShapeError unless x is B×3×R×R (any R the trunk accepts).
  void check_input(const FeatureMaps<Scalar>& x) const;

  Embedding<Scalar> embed(const FeatureMaps<Scalar>& x) const;
  /// kEmbeddingDim × batch.
  MatrixX<Scalar> embed_batch(const FeatureMaps<Scalar>& x) const;

  /// Training forward; keep `tape` for backward().
  MatrixX<Scalar> forward(const FeatureMaps<Scalar>& x, nn::Tape<Scalar>& tape) const;
  void backward(const nn::Tape<Scalar>& tape, const MatrixX<Scalar>& grad_embeddings,
                VectorX<Scalar>& grad) const;

 private:
  EmbeddingNetSpec spec_;
  nn::Sequential<Scalar> encoder_;
  Index trunk_end_ = 0;
  VectorX<Scalar> params_;
};

extern template class VerificationNet<float>;
extern template class VerificationNet<double>;
extern template class EmbeddingNet<float>;
extern template class EmbeddingNet<double>;

}  // namespace reidbench
