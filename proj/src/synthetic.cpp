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

#include "reidbench/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "reidbench/random.hpp"

namespace reidbench {

const std::array<std::string, 14> kFindingVocabulary = {
    "Atelectasis", "Cardiomegaly", "Effusion",      "Infiltration",       "Mass",
    "Nodule",      "Pneumonia",    "Pneumothorax",  "Consolidation",      "Edema",
    "Emphysema",   "Fibrosis",     "Pleural_Thickening", "Hernia"};

namespace {

constexpr std::uint64_t kPatternStream = 0x70617474;
constexpr std::uint64_t kImageStream = 0x696d6167;
constexpr std::uint64_t kMetaStream = 0x6d657461;

struct Blob {
  double cx, cy, sigma, amplitude;
};

std::vector<Blob> identity_blobs(const SyntheticSpec& spec, size_t identity) {
  std::mt19937_64 rng(derive_seed(spec.seed, {kPatternStream, identity}));
  std::uniform_real_distribution<double> pos(-0.35, 0.35), width(spec.blob_sigma_min, spec.blob_sigma_max), mag(0.15, 0.35);
  std::bernoulli_distribution sign(0.5);
  std::vector<Blob> blobs(spec.blobs);
  for (auto& b : blobs) {
    b.cx = pos(rng);
    b.cy = pos(rng);
    b.sigma = width(rng);
    b.amplitude = sign(rng) ? mag(rng) : -mag(rng);
  }
  return blobs;
}

// Shared template: bright mediastinum between two darker lobes, vertical
// gradient. Coordinates are centered, unit side.
double template_value(double u, double v) {
  auto lobe = [&](double cx) {
    const double du = (u - cx) / 0.14, dv = v / 0.28;
    return std::exp(-0.5 * (du * du + dv * dv));
  };
  return 0.55 - 0.18 * (lobe(-0.2) + lobe(0.2)) + 0.1 * v;
}

double pattern_value(const std::vector<Blob>& blobs, double u, double v) {
  double s = template_value(u, v);
  for (const auto& b : blobs) {
    const double du = u - b.cx, dv = v - b.cy;
    s += b.amplitude * std::exp(-(du * du + dv * dv) / (2 * b.sigma * b.sigma));
  }
  return s;
}

std::string image_id(size_t identity, size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%08zu_%03zu.png", identity + 1, index);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_identities == 0) throw ConfigError("synthetic n_identities must be positive");
  if (min_images == 0 || min_images > max_images)
    throw ConfigError("synthetic image range must satisfy 1 <= min_images <= max_images");
  if (resolution < 8) throw ConfigError("synthetic resolution must be at least 8");
  if (!(scale_min > 0) || scale_min > scale_max)
    throw ConfigError("synthetic scale range must satisfy 0 < scale_min <= scale_max");
  if (!(blob_sigma_min > 0) || blob_sigma_min > blob_sigma_max)
    throw ConfigError("synthetic blob widths must satisfy 0 < blob_sigma_min <= blob_sigma_max");
  if (rotation_degrees < 0 || shift_fraction < 0 || intensity_shift < 0 || noise_sigma < 0)
    throw ConfigError("synthetic augmentation magnitudes must be non-negative");
}

Plane<double> identity_pattern(const SyntheticSpec& spec, size_t identity) {
  const auto blobs = identity_blobs(spec, identity);
  const Index r = spec.resolution;
  Plane<double> out(r, r);
  for (Index y = 0; y < r; ++y)
    for (Index x = 0; x < r; ++x)
      out(y, x) = std::clamp(
          pattern_value(blobs, (x + 0.5) / double(r) - 0.5, (y + 0.5) / double(r) - 0.5), 0.0,
          1.0);
  return out;
}

std::vector<SyntheticImage> render_dataset(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SyntheticImage> out;
  const Index r = spec.resolution;
  for (size_t p = 0; p < spec.n_identities; ++p) {
    const auto blobs = identity_blobs(spec, p);
    std::mt19937_64 meta(derive_seed(spec.seed, {kMetaStream, p}));
    const size_t count = std::uniform_int_distribution<size_t>(spec.min_images, spec.max_images)(meta);
    const int base_age = std::uniform_int_distribution<int>(20, 85)(meta);
    const Gender gender = std::bernoulli_distribution(0.5)(meta) ? Gender::kMale : Gender::kFemale;

    int age = base_age;
    for (size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(derive_seed(spec.seed, {kImageStream, p, i}));
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      const double theta = unit(rng) * spec.rotation_degrees * std::numbers::pi / 180.0;
      const double scale = spec.scale_min + (spec.scale_max - spec.scale_min) * (unit(rng) + 1) / 2;
      const double tx = unit(rng) * spec.shift_fraction, ty = unit(rng) * spec.shift_fraction;
      const double offset = unit(rng) * spec.intensity_shift;
      std::normal_distribution<double> noise(0.0, 1.0);
      const double c = std::cos(theta), s = std::sin(theta);

      Raster raster{r, r, 1, std::vector<std::uint8_t>(size_t(r * r))};
      for (Index y = 0; y < r; ++y)
        for (Index x = 0; x < r; ++x) {
          const double u = (x + 0.5) / double(r) - 0.5 - tx;
          const double v = (y + 0.5) / double(r) - 0.5 - ty;
          // inverse of rotate-then-scale
          const double su = (c * u + s * v) / scale, sv = (-s * u + c * v) / scale;
          double value = pattern_value(blobs, su, sv) + offset;
          if (spec.noise_sigma > 0) value += spec.noise_sigma * noise(rng);
          raster.pixels[size_t(y * r + x)] =
              static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(value, 0.0, 1.0)));
        }

      ImageRecord rec;
      rec.image_id = image_id(p, i);
      rec.patient_id = std::to_string(p + 1);
      rec.follow_up_index = static_cast<int>(i);
      if (i > 0) age += std::uniform_int_distribution<int>(0, 1)(meta);
      rec.age_years = std::min(age, kMaxAgeYears);
      rec.gender = gender;
      rec.view = std::bernoulli_distribution(0.5)(meta) ? View::kAP : View::kPA;
      if (std::bernoulli_distribution(0.5)(meta)) {
        rec.finding_labels.clear();
        const int n = std::uniform_int_distribution<int>(1, 2)(meta);
        std::uniform_int_distribution<size_t> pick(0, kFindingVocabulary.size() - 1);
        for (int k = 0; k < n; ++k) rec.finding_labels.insert(kFindingVocabulary[pick(meta)]);
      }
      rec.source_path = std::filesystem::path("images") / rec.image_id;
      out.push_back({std::move(rec), std::move(raster)});
    }
  }
  return out;
}

Manifest generate(const SyntheticSpec& spec, const std::filesystem::path& output_dir) {
  auto images = render_dataset(spec);
  std::filesystem::create_directories(output_dir / "images");
  std::vector<ImageRecord> relative, resolved;
  for (auto& img : images) {
    write_png(output_dir / img.record.source_path, img.raster);
    relative.push_back(img.record);
    img.record.source_path = output_dir / img.record.source_path;
    resolved.push_back(std::move(img.record));
  }
  write_text_file(output_dir / "manifest.csv", serialize_manifest(Manifest(std::move(relative))));
  return Manifest(std::move(resolved));
}

}  // namespace reidbench
