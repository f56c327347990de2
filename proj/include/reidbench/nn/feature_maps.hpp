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

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "reidbench/errors.hpp"

namespace reidbench {

using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct Shape {
  Index batch = 0;
  Index channels = 0;
  Index height = 0;
  Index width = 0;

  Index spatial() const { return height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.batch) + "x" + std::to_string(s.channels) + "x" +
         std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// A batch of multi-channel planes.
///
/// Storage is one column per (sample, row, col) position and one row per
/// channel: column index = (n * height + y) * width + x. Each sample is
/// therefore a contiguous block of columns, and a sample's flattened feature
/// vector (channel fastest) is a zero-copy view of that block.
template <typename Scalar>
struct FeatureMaps {
  Shape shape;
  MatrixX<Scalar> data;

  FeatureMaps() = default;
  FeatureMaps(Shape s, MatrixX<Scalar> d) : shape(s), data(std::move(d)) {
    if (data.rows() != shape.channels || data.cols() != shape.batch * shape.spatial())
      throw ShapeError("feature map storage does not match shape " + to_string(shape));
  }

  static FeatureMaps zeros(Shape s) {
    return FeatureMaps(s, MatrixX<Scalar>::Zero(s.channels, s.batch * s.spatial()));
  }

  Index column(Index n, Index y, Index x) const {
    return (n * shape.height + y) * shape.width + x;
  }

  auto sample(Index n) { return data.middleCols(n * shape.spatial(), shape.spatial()); }
  auto sample(Index n) const {
    return data.middleCols(n * shape.spatial(), shape.spatial());
  }

  /// Samples [begin, begin + count).
  FeatureMaps slice(Index begin, Index count) const {
    Shape s = shape;
    s.batch = count;
    return FeatureMaps(s, data.middleCols(begin * shape.spatial(), count * shape.spatial()));
  }

  template <typename Other>
  FeatureMaps<Other> cast() const {
    return FeatureMaps<Other>(shape, data.template cast<Other>());
  }
};

/// Stacks batches along the sample axis. All inputs must share C×H×W.
template <typename Scalar>
FeatureMaps<Scalar> concat_batch(const std::vector<const FeatureMaps<Scalar>*>& parts) {
  if (parts.empty()) return {};
  Shape s = parts.front()->shape;
  s.batch = 0;
  for (const auto* p : parts) {
    if (p->shape.channels != s.channels || p->shape.height != s.height ||
        p->shape.width != s.width)
      throw ShapeError("cannot stack " + to_string(p->shape) + " onto " + to_string(s));
    s.batch += p->shape.batch;
  }
  MatrixX<Scalar> data(s.channels, s.batch * s.spatial());
  Index col = 0;
  for (const auto* p : parts) {
    data.middleCols(col, p->data.cols()) = p->data;
    col += p->data.cols();
  }
  return FeatureMaps<Scalar>(s, std::move(data));
}

template <typename Scalar>
FeatureMaps<Scalar> concat_batch(const FeatureMaps<Scalar>& a, const FeatureMaps<Scalar>& b) {
  return concat_batch<Scalar>({&a, &b});
}

}  // namespace reidbench
