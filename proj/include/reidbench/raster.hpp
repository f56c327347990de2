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
#include <cstdint>
#include <filesystem>
#include <vector>

#include "reidbench/nn/feature_maps.hpp"

namespace reidbench {

/// 8-bit raster, interleaved channels, row-major.
struct Raster {
  Index height = 0;
  Index width = 0;
  Index channels = 1;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(Index y, Index x, Index c = 0) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

/// Decodes an 8-bit gray or RGB PNG. Gray+alpha and RGBA inputs drop
/// their alpha channel. Throws LoadError carrying the path.
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

template <typename Scalar>
using Plane = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Bilinear resampling with half-pixel centers and edge clamping. Same-size
/// input is returned unchanged.
template <typename Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& src, Index height, Index width) {
  if (src.rows() == height && src.cols() == width) return src;
  Plane<Scalar> out(height, width);
  const double sy = double(src.rows()) / double(height);
  const double sx = double(src.cols()) / double(width);
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.rows() - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min<Index>(y0 + 1, src.rows() - 1);
    const Scalar wy = static_cast<Scalar>(fy - double(y0));
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.cols() - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min<Index>(x0 + 1, src.cols() - 1);
      const Scalar wx = static_cast<Scalar>(fx - double(x0));
      const Scalar top = src(y0, x0) * (Scalar(1) - wx) + src(y0, x1) * wx;
      const Scalar bottom = src(y1, x0) * (Scalar(1) - wx) + src(y1, x1) * wx;
      out(y, x) = top * (Scalar(1) - wy) + bottom * wy;
    }
  }
  return out;
}

}  // namespace reidbench
