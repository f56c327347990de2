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

#include "reidbench/nn/layers.hpp"

#include <cmath>
#include <limits>

namespace reidbench::nn {
namespace {

template <typename Scalar>
void he_normal(Eigen::Map<MatrixX<Scalar>> weights, Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index j = 0; j < weights.cols(); ++j)
    for (Index i = 0; i < weights.rows(); ++i) weights(i, j) = static_cast<Scalar>(normal(rng));
}

struct Bin {
  Index begin, end;
};

std::vector<Bin> adaptive_bins(Index length, Index bins) {
  std::vector<Bin> out(static_cast<size_t>(bins));
  for (Index i = 0; i < bins; ++i) {
    out[static_cast<size_t>(i)] = {(i * length) / bins, ((i + 1) * length + bins - 1) / bins};
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename Scalar>
Conv2d<Scalar>::Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride,
                       Index padding)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0)
    throw ShapeError("invalid convolution geometry");
}

template <typename Scalar>
Shape Conv2d<Scalar>::output_shape(const Shape& in) const {
  if (in.channels != in_channels_)
    throw ShapeError("conv2d expects " + std::to_string(in_channels_) + " channels, got " +
                     std::to_string(in.channels));
  const Index h = (in.height + 2 * padding_ - kernel_) / stride_ + 1;
  const Index w = (in.width + 2 * padding_ - kernel_) / stride_ + 1;
  if (in.height + 2 * padding_ < kernel_ || in.width + 2 * padding_ < kernel_)
    throw ShapeError("conv2d input " + to_string(in) + " smaller than kernel");
  return {in.batch, out_channels_, h, w};
}

template <typename Scalar>
Index Conv2d<Scalar>::parameter_count() const {
  return out_channels_ * kernel_ * kernel_ * in_channels_ + out_channels_;
}

template <typename Scalar>
void Conv2d<Scalar>::initialize(std::span<Scalar> params, std::mt19937_64& rng) const {
  const Index fan_in = kernel_ * kernel_ * in_channels_;
  he_normal<Scalar>(Eigen::Map<MatrixX<Scalar>>(params.data(), out_channels_, fan_in), fan_in,
                    rng);
  std::fill(params.begin() + out_channels_ * fan_in, params.end(), Scalar(0));
}

template <typename Scalar>
FeatureMaps<Scalar> Conv2d<Scalar>::forward(std::span<const Scalar> params,
                                            const FeatureMaps<Scalar>& in,
                                            LayerCache<Scalar>* cache) const {
  const Shape out_shape = output_shape(in.shape);
  const Index fan_in = kernel_ * kernel_ * in_channels_;
  const Index out_cols = out_shape.batch * out_shape.spatial();

  // Row layout of the column buffer: (ky * k + kx) * Cin + c.
  MatrixX<Scalar> columns = MatrixX<Scalar>::Zero(fan_in, out_cols);
  for (Index n = 0; n < out_shape.batch; ++n) {
    for (Index oy = 0; oy < out_shape.height; ++oy) {
      for (Index ox = 0; ox < out_shape.width; ++ox) {
        const Index oc = (n * out_shape.height + oy) * out_shape.width + ox;
        for (Index ky = 0; ky < kernel_; ++ky) {
          const Index iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= in.shape.height) continue;
          for (Index kx = 0; kx < kernel_; ++kx) {
            const Index ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= in.shape.width) continue;
            columns.col(oc).segment((ky * kernel_ + kx) * in_channels_, in_channels_) =
                in.data.col(in.column(n, iy, ix));
          }
        }
      }
    }
  }

  Eigen::Map<const MatrixX<Scalar>> weights(params.data(), out_channels_, fan_in);
  Eigen::Map<const VectorX<Scalar>> bias(params.data() + out_channels_ * fan_in, out_channels_);
  MatrixX<Scalar> out = weights * columns;
  out.colwise() += bias;

  if (cache) {
    cache->input_shape = in.shape;
    cache->columns = std::move(columns);
  }
  return FeatureMaps<Scalar>(out_shape, std::move(out));
}

template <typename Scalar>
FeatureMaps<Scalar> Conv2d<Scalar>::backward(std::span<const Scalar> params,
                                             const FeatureMaps<Scalar>& grad_out,
                                             const LayerCache<Scalar>& cache,
                                             std::span<Scalar> grad) const {
  const Shape& in_shape = cache.input_shape;
  const Shape& out_shape = grad_out.shape;
  const Index fan_in = kernel_ * kernel_ * in_channels_;

  Eigen::Map<const MatrixX<Scalar>> weights(params.data(), out_channels_, fan_in);
  Eigen::Map<MatrixX<Scalar>> grad_weights(grad.data(), out_channels_, fan_in);
  Eigen::Map<VectorX<Scalar>> grad_bias(grad.data() + out_channels_ * fan_in, out_channels_);
  grad_weights.noalias() += grad_out.data * cache.columns.transpose();
  grad_bias += grad_out.data.rowwise().sum();

  const MatrixX<Scalar> grad_columns = weights.transpose() * grad_out.data;
  auto grad_in = FeatureMaps<Scalar>::zeros(in_shape);
  for (Index n = 0; n < out_shape.batch; ++n) {
    for (Index oy = 0; oy < out_shape.height; ++oy) {
      for (Index ox = 0; ox < out_shape.width; ++ox) {
        const Index oc = (n * out_shape.height + oy) * out_shape.width + ox;
        for (Index ky = 0; ky < kernel_; ++ky) {
          const Index iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= in_shape.height) continue;
          for (Index kx = 0; kx < kernel_; ++kx) {
            const Index ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= in_shape.width) continue;
            grad_in.data.col(grad_in.column(n, iy, ix)) +=
                grad_columns.col(oc).segment((ky * kernel_ + kx) * in_channels_, in_channels_);
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- Relu

template <typename Scalar>
FeatureMaps<Scalar> Relu<Scalar>::forward(std::span<const Scalar>, const FeatureMaps<Scalar>& in,
                                          LayerCache<Scalar>* cache) const {
  if (cache) {
    cache->input_shape = in.shape;
    cache->input = in;
  }
  return FeatureMaps<Scalar>(in.shape, in.data.cwiseMax(Scalar(0)));
}

template <typename Scalar>
FeatureMaps<Scalar> Relu<Scalar>::backward(std::span<const Scalar>,
                                           const FeatureMaps<Scalar>& grad_out,
                                           const LayerCache<Scalar>& cache,
                                           std::span<Scalar>) const {
  return FeatureMaps<Scalar>(
      grad_out.shape,
      (cache.input.data.array() > Scalar(0)).select(grad_out.data, Scalar(0)).matrix());
}

// ---------------------------------------------------------------- AdaptivePool

template <typename Scalar>
AdaptivePool<Scalar>::AdaptivePool(PoolMode mode, Index out_height, Index out_width)
    : mode_(mode), out_height_(out_height), out_width_(out_width) {
  if (out_height <= 0 || out_width <= 0) throw ShapeError("pool output must be positive");
}

template <typename Scalar>
std::string_view AdaptivePool<Scalar>::kind() const {
  switch (mode_) {
    case PoolMode::kAverage: return "adaptive_avg_pool";
    case PoolMode::kMax: return "adaptive_max_pool";
    case PoolMode::kConcat: return "adaptive_concat_pool";
  }
  return "adaptive_pool";
}

template <typename Scalar>
Shape AdaptivePool<Scalar>::output_shape(const Shape& in) const {
  const Index c = mode_ == PoolMode::kConcat ? 2 * in.channels : in.channels;
  return {in.batch, c, out_height_, out_width_};
}

template <typename Scalar>
FeatureMaps<Scalar> AdaptivePool<Scalar>::forward(std::span<const Scalar>,
                                                  const FeatureMaps<Scalar>& in,
                                                  LayerCache<Scalar>* cache) const {
  const Shape out_shape = output_shape(in.shape);
  const Index c = in.shape.channels;
  const auto rows = adaptive_bins(in.shape.height, out_height_);
  const auto cols = adaptive_bins(in.shape.width, out_width_);
  const bool want_avg = mode_ != PoolMode::kMax;
  const bool want_max = mode_ != PoolMode::kAverage;
  const Index max_offset = mode_ == PoolMode::kConcat ? c : 0;

  auto out = FeatureMaps<Scalar>::zeros(out_shape);
  std::vector<Index> argmax;
  if (want_max) argmax.assign(static_cast<size_t>(c * out_shape.batch * out_shape.spatial()), 0);

  for (Index n = 0; n < in.shape.batch; ++n) {
    for (Index oy = 0; oy < out_height_; ++oy) {
      const Bin by = rows[static_cast<size_t>(oy)];
      for (Index ox = 0; ox < out_width_; ++ox) {
        const Bin bx = cols[static_cast<size_t>(ox)];
        const Index oc = out.column(n, oy, ox);
        if (want_avg) {
          VectorX<Scalar> sum = VectorX<Scalar>::Zero(c);
          for (Index y = by.begin; y < by.end; ++y)
            for (Index x = bx.begin; x < bx.end; ++x) sum += in.data.col(in.column(n, y, x));
          const auto count = static_cast<Scalar>((by.end - by.begin) * (bx.end - bx.begin));
          out.data.col(oc).head(c) = sum / count;
        }
        if (want_max) {
          for (Index ch = 0; ch < c; ++ch) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            Index best_col = in.column(n, by.begin, bx.begin);
            for (Index y = by.begin; y < by.end; ++y) {
              for (Index x = bx.begin; x < bx.end; ++x) {
                const Index ic = in.column(n, y, x);
                if (in.data(ch, ic) > best) {
                  best = in.data(ch, ic);
                  best_col = ic;
                }
              }
            }
            out.data(max_offset + ch, oc) = best;
            argmax[static_cast<size_t>(oc * c + ch)] = best_col;
          }
        }
      }
    }
  }
  if (cache) {
    cache->input_shape = in.shape;
    cache->indices = std::move(argmax);
  }
  return out;
}

template <typename Scalar>
FeatureMaps<Scalar> AdaptivePool<Scalar>::backward(std::span<const Scalar>,
                                                   const FeatureMaps<Scalar>& grad_out,
                                                   const LayerCache<Scalar>& cache,
                                                   std::span<Scalar>) const {
  const Shape& in_shape = cache.input_shape;
  const Index c = in_shape.channels;
  const auto rows = adaptive_bins(in_shape.height, out_height_);
  const auto cols = adaptive_bins(in_shape.width, out_width_);
  const Index max_offset = mode_ == PoolMode::kConcat ? c : 0;

  auto grad_in = FeatureMaps<Scalar>::zeros(in_shape);
  for (Index n = 0; n < in_shape.batch; ++n) {
    for (Index oy = 0; oy < out_height_; ++oy) {
      const Bin by = rows[static_cast<size_t>(oy)];
      for (Index ox = 0; ox < out_width_; ++ox) {
        const Bin bx = cols[static_cast<size_t>(ox)];
        const Index oc = grad_out.column(n, oy, ox);
        if (mode_ != PoolMode::kMax) {
          const auto count = static_cast<Scalar>((by.end - by.begin) * (bx.end - bx.begin));
          const VectorX<Scalar> share = grad_out.data.col(oc).head(c) / count;
          for (Index y = by.begin; y < by.end; ++y)
            for (Index x = bx.begin; x < bx.end; ++x)
              grad_in.data.col(grad_in.column(n, y, x)) += share;
        }
        if (mode_ != PoolMode::kAverage) {
          for (Index ch = 0; ch < c; ++ch) {
            const Index ic = cache.indices[static_cast<size_t>(oc * c + ch)];
            grad_in.data(ch, ic) += grad_out.data(max_offset + ch, oc);
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- Flatten

template <typename Scalar>
Shape Flatten<Scalar>::output_shape(const Shape& in) const {
  return {in.batch, in.channels * in.spatial(), 1, 1};
}

template <typename Scalar>
FeatureMaps<Scalar> Flatten<Scalar>::forward(std::span<const Scalar>,
                                             const FeatureMaps<Scalar>& in,
                                             LayerCache<Scalar>* cache) const {
  const Shape out_shape = output_shape(in.shape);
  if (cache) {
    cache->input_shape = in.shape;
  }
  return FeatureMaps<Scalar>(
      out_shape,
      Eigen::Map<const MatrixX<Scalar>>(in.data.data(), out_shape.channels, out_shape.batch));
}

template <typename Scalar>
FeatureMaps<Scalar> Flatten<Scalar>::backward(std::span<const Scalar>,
                                              const FeatureMaps<Scalar>& grad_out,
                                              const LayerCache<Scalar>& cache,
                                              std::span<Scalar>) const {
  const Shape& s = cache.input_shape;
  return FeatureMaps<Scalar>(
      s, Eigen::Map<const MatrixX<Scalar>>(grad_out.data.data(), s.channels,
                                           s.batch * s.spatial()));
}

// ---------------------------------------------------------------- Linear

template <typename Scalar>
Linear<Scalar>::Linear(Index in_features, Index out_features)
    : in_(in_features), out_(out_features) {
  if (in_features <= 0 || out_features <= 0) throw ShapeError("invalid linear layer size");
}

template <typename Scalar>
Shape Linear<Scalar>::output_shape(const Shape& in) const {
  if (in.channels != in_ || in.height != 1 || in.width != 1)
    throw ShapeError("linear layer expects " + std::to_string(in_) + "x1x1 input, got " +
                     to_string(in));
  return {in.batch, out_, 1, 1};
}

template <typename Scalar>
void Linear<Scalar>::initialize(std::span<Scalar> params, std::mt19937_64& rng) const {
  he_normal<Scalar>(Eigen::Map<MatrixX<Scalar>>(params.data(), out_, in_), in_, rng);
  std::fill(params.begin() + out_ * in_, params.end(), Scalar(0));
}

template <typename Scalar>
FeatureMaps<Scalar> Linear<Scalar>::forward(std::span<const Scalar> params,
                                            const FeatureMaps<Scalar>& in,
                                            LayerCache<Scalar>* cache) const {
  const Shape out_shape = output_shape(in.shape);
  Eigen::Map<const MatrixX<Scalar>> weights(params.data(), out_, in_);
  Eigen::Map<const VectorX<Scalar>> bias(params.data() + out_ * in_, out_);
  MatrixX<Scalar> out = weights * in.data;
  out.colwise() += bias;
  if (cache) {
    cache->input_shape = in.shape;
    cache->input = in;
  }
  return FeatureMaps<Scalar>(out_shape, std::move(out));
}

template <typename Scalar>
FeatureMaps<Scalar> Linear<Scalar>::backward(std::span<const Scalar> params,
                                             const FeatureMaps<Scalar>& grad_out,
                                             const LayerCache<Scalar>& cache,
                                             std::span<Scalar> grad) const {
  Eigen::Map<const MatrixX<Scalar>> weights(params.data(), out_, in_);
  Eigen::Map<MatrixX<Scalar>> grad_weights(grad.data(), out_, in_);
  Eigen::Map<VectorX<Scalar>> grad_bias(grad.data() + out_ * in_, out_);
  grad_weights.noalias() += grad_out.data * cache.input.data.transpose();
  grad_bias += grad_out.data.rowwise().sum();
  return FeatureMaps<Scalar>(cache.input_shape, weights.transpose() * grad_out.data);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Relu<float>;
template class Relu<double>;
template class AdaptivePool<float>;
template class AdaptivePool<double>;
template class Flatten<float>;
template class Flatten<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace reidbench::nn
