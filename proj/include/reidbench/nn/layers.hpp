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

#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "reidbench/nn/feature_maps.hpp"

namespace reidbench::nn {

/// Per-layer state recorded during a training forward pass.
template <typename Scalar>
struct LayerCache {
  Shape input_shape;
  FeatureMaps<Scalar> input;   // kept only by layers that need the values
  MatrixX<Scalar> columns;     // im2col buffer (convolution)
  std::vector<Index> indices;  // argmax positions (max pooling)
};

/// A differentiable map between feature maps.
///
/// Layers own no parameter storage. They read their slice of a flat
/// parameter vector and accumulate into the matching slice of a gradient
/// vector, so one network can be optimized, checkpointed, and
/// finite-differenced as a single Eigen vector.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Index parameter_count() const { return 0; }
  virtual void initialize(std::span<Scalar> /*params*/, std::mt19937_64& /*rng*/) const {}

  /// `cache` is null in inference.
  virtual FeatureMaps<Scalar> forward(std::span<const Scalar> params,
                                      const FeatureMaps<Scalar>& in,
                                      LayerCache<Scalar>* cache) const = 0;

  /// Returns the gradient w.r.t. the layer input and adds parameter
  /// gradients into `grad`.
  virtual FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                                       const FeatureMaps<Scalar>& grad_out,
                                       const LayerCache<Scalar>& cache,
                                       std::span<Scalar> grad) const = 0;
};

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding);

  std::string_view kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Index parameter_count() const override;
  void initialize(std::span<Scalar> params, std::mt19937_64& rng) const override;
  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              LayerCache<Scalar>* cache) const override;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out,
                               const LayerCache<Scalar>& cache,
                               std::span<Scalar> grad) const override;

  Index in_channels() const { return in_channels_; }
  Index out_channels() const { return out_channels_; }
  Index kernel() const { return kernel_; }

 private:
  Index in_channels_, out_channels_, kernel_, stride_, padding_;
};

template <typename Scalar>
class Relu final : public Layer<Scalar> {
 public:
  std::string_view kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              LayerCache<Scalar>* cache) const override;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out,
                               const LayerCache<Scalar>& cache,
                               std::span<Scalar> grad) const override;
};

enum class PoolMode { kAverage, kMax, kConcat };

/// Adaptive pooling to a fixed output grid. Bin i along an axis of length L
/// covers [floor(i*L/O), ceil((i+1)*L/O)), so any input size (including
/// L < O) maps to O bins. kConcat stacks the average and max outputs along
/// channels (average first).
template <typename Scalar>
class AdaptivePool final : public Layer<Scalar> {
 public:
  AdaptivePool(PoolMode mode, Index out_height, Index out_width);

  std::string_view kind() const override;
  Shape output_shape(const Shape& in) const override;
  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              LayerCache<Scalar>* cache) const override;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out,
                               const LayerCache<Scalar>& cache,
                               std::span<Scalar> grad) const override;

 private:
  PoolMode mode_;
  Index out_height_, out_width_;
};

/// Reshapes C×H×W into a (C·H·W)×1×1 feature vector per sample.
template <typename Scalar>
class Flatten final : public Layer<Scalar> {
 public:
  std::string_view kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              LayerCache<Scalar>* cache) const override;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out,
                               const LayerCache<Scalar>& cache,
                               std::span<Scalar> grad) const override;
};

/// Affine map on 1×1 feature vectors.
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(Index in_features, Index out_features);

  std::string_view kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override;
  Index parameter_count() const override { return out_ * in_ + out_; }
  void initialize(std::span<Scalar> params, std::mt19937_64& rng) const override;
  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              LayerCache<Scalar>* cache) const override;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out,
                               const LayerCache<Scalar>& cache,
                               std::span<Scalar> grad) const override;

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }

 private:
  Index in_, out_;
};

}  // namespace reidbench::nn
