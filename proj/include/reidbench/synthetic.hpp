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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reidbench/catalog.hpp"

namespace reidbench {

/// The 14 ChestX-ray14 finding labels.
extern const std::array<std::string, 14> kFindingVocabulary;

/// Procedural identity dataset. Each identity is a fixed smooth random
/// field (sum of Gaussian blobs) over a shared template; each image applies
/// a random rotation, scale, shift, intensity offset and pixel noise.
struct SyntheticSpec {
  size_t n_identities = 50;
  size_t min_images = 2;
  size_t max_images = 5;
  Index resolution = 64;
  size_t blobs = 8;
  double blob_sigma_min = 0.05;  // blob widths, fraction of the image side
  double blob_sigma_max = 0.12;
  double rotation_degrees = 5.0;  // uniform in ±
  double scale_min = 0.95;
  double scale_max = 1.05;
  double shift_fraction = 0.03;   // of the image side, uniform in ±
  double intensity_shift = 0.05;  // uniform in ±
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an inconsistent spec.
  void validate() const;
};

struct SyntheticImage {
  ImageRecord record;
  Raster raster;
};

/// Noise- and augmentation-free rendering of an identity's pattern, values
/// in [0, 1] before quantization.
Plane<double> identity_pattern(const SyntheticSpec& spec, size_t identity);

/// Renders the whole dataset in memory. Image i of identity p is a pure
/// function of (spec, p, i).
std::vector<SyntheticImage> render_dataset(const SyntheticSpec& spec);

/// Writes `images/<image_id>` PNGs and `manifest.csv` (ChestX-ray14
/// columns plus relative Path) under output_dir and returns the manifest
/// with resolved paths.
Manifest generate(const SyntheticSpec& spec, const std::filesystem::path& output_dir);

}  // namespace reidbench
