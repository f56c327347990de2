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

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace reidbench {

inline constexpr double kBceEpsilon = 1e-12;

/// Binary cross-entropy of one prediction; the prediction is clamped to
/// [eps, 1 - eps] before the logarithms.
template <typename Scalar>
Scalar bce_loss(Scalar prediction, int label) {
  const Scalar eps = static_cast<Scalar>(kBceEpsilon);
  const Scalar p = std::clamp(prediction, eps, Scalar(1) - eps);
  return label ? -std::log(p) : -std::log(Scalar(1) - p);
}

/// Batch mean of bce_loss.
template <typename Scalar>
Scalar bce_loss(std::span<const Scalar> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("bce_loss: predictions and labels differ in length");
  if (predictions.empty()) return Scalar(0);
  Scalar sum = 0;
  for (size_t i = 0; i < predictions.size(); ++i) sum += bce_loss(predictions[i], labels[i]);
  return sum / static_cast<Scalar>(predictions.size());
}

/// ½·[y·d² + (1−y)·max(0, m−d)²]
template <typename Scalar>
Scalar contrastive_loss(Scalar distance, int label, Scalar margin) {
  if (label) return Scalar(0.5) * distance * distance;
  const Scalar gap = std::max(Scalar(0), margin - distance);
  return Scalar(0.5) * gap * gap;
}

/// d(contrastive_loss)/d(distance).
template <typename Scalar>
Scalar contrastive_loss_derivative(Scalar distance, int label, Scalar margin) {
  if (label) return distance;
  return distance < margin ? -(margin - distance) : Scalar(0);
}

}  // namespace reidbench
