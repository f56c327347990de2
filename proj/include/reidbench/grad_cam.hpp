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

#include <string>
#include <utility>
#include <vector>

#include "reidbench/models.hpp"
#include "reidbench/raster.hpp"

namespace reidbench {

struct AttentionMap {
  Plane<double> values;  // input H×W, in [0, 1]
  std::string layer_id;
};

/// Names of the layers grad_cam accepts, in network order.
template <typename Scalar>
std::vector<std::string> grad_cam_layers(const VerificationNet<Scalar>& model);

/// Gradient-weighted class activation maps of the verification score for
/// both inputs of a pair, taken at the output of convolution `layer_id`.
template <typename Scalar>
std::pair<AttentionMap, AttentionMap> grad_cam(const VerificationNet<Scalar>& model,
                                               const FeatureMaps<Scalar>& x1,
                                               const FeatureMaps<Scalar>& x2,
                                               const std::string& layer_id);

/// Renders a map as an 8-bit heat overlay on `base` (grayscale, same size).
Raster overlay_heatmap(const Raster& base, const AttentionMap& map, double alpha = 0.5);

}  // namespace reidbench
