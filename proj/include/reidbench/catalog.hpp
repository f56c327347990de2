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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "reidbench/nn/feature_maps.hpp"
#include "reidbench/raster.hpp"

namespace reidbench {

enum class Gender { kMale, kFemale, kUnknown };
enum class View { kAP, kPA, kUnknown };

std::string_view to_string(Gender g);
std::string_view to_string(View v);

inline constexpr int kMaxAgeYears = 120;
inline const std::string kNoFinding = "No Finding";

struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  int follow_up_index = 0;
  int age_years = 0;
  bool age_valid = true;  // false when the raw age could not be parsed
  Gender gender = Gender::kUnknown;
  View view = View::kUnknown;
  std::set<std::string> finding_labels{kNoFinding};
  std::filesystem::path source_path;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Row-level problem found while parsing; the row is kept.
struct ParseIssue {
  size_t row = 0;  // 1-based data row
  std::string column;
  std::string message;
};

/// Immutable, ordered collection of image records with a patient index.
class Manifest {
 public:
  Manifest() = default;
  /// Throws SchemaError on duplicate image ids.
  explicit Manifest(std::vector<ImageRecord> records, std::vector<ParseIssue> issues = {});

  const std::vector<ImageRecord>& records() const { return records_; }
  /// patient_id -> record positions, in record order.
  const std::map<std::string, std::vector<size_t>>& patient_index() const { return patients_; }
  const std::vector<ParseIssue>& issues() const { return issues_; }

  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  size_t patient_count() const { return patients_.size(); }
  const ImageRecord& operator[](size_t i) const { return records_[i]; }
  const ImageRecord* find(std::string_view image_id) const;

 private:
  std::vector<ImageRecord> records_;
  std::map<std::string, std::vector<size_t>> patients_;
  std::unordered_map<std::string, size_t> by_id_;
  std::vector<ParseIssue> issues_;
};

/// Column names for each ImageRecord field. `path` is optional: when the
/// column is absent, source_path = image_root / image_id; relative Path
/// cells are taken relative to image_root.
struct ManifestSchema {
  std::string image_id = "Image Index";
  std::string findings = "Finding Labels";
  std::string follow_up = "Follow-up #";
  std::string patient_id = "Patient ID";
  std::string age = "Patient Age";
  std::string gender = "Patient Gender";
  std::string view = "View Position";
  std::string path = "Path";
  std::filesystem::path image_root;

  /// The ChestX-ray14 Data_Entry CSV layout.
  static ManifestSchema chestxray14(std::filesystem::path image_root = {});
};

Manifest parse_manifest(std::string_view csv_content, const ManifestSchema& schema);
/// With an empty image_root, images resolve against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path, const ManifestSchema& schema);

/// ChestX-ray14 columns plus a Path column; parse_manifest with the default
/// schema inverts it.
std::string serialize_manifest(const Manifest& manifest);

/// Parses a raw age cell: plain years ("58"), or zero-padded with a unit
/// suffix ("058Y", "011M", "003W", "005D"). Returns whole years clamped to
/// [0, 120], or nullopt when unparseable.
std::optional<int> parse_age_years(std::string_view raw);

Manifest filter_manifest(const Manifest& manifest,
                         const std::function<bool(const ImageRecord&)>& predicate);

// ---------------------------------------------------------------- splits

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
std::string_view to_string(Split s);
Split parse_split_name(std::string_view name);

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;

  Split of(const std::string& patient_id) const;
};

/// Shuffles patients with a seeded generator, then assigns each to the
/// split (with non-zero fraction) whose image count is furthest below its
/// target. Throws on an empty manifest or invalid fractions.
SplitAssignment patient_wise_split(const Manifest& manifest, std::array<double, 3> fractions,
                                   std::uint64_t seed);

/// `patient_id,split_name` lines sorted by patient id.
std::string serialize_split(const SplitAssignment& split);
SplitAssignment parse_split(std::string_view text);

/// Records of patients assigned to `which`. Throws SchemaError if a patient
/// of the manifest is missing from the assignment.
Manifest split_subset(const Manifest& manifest, const SplitAssignment& split, Split which);

// ---------------------------------------------------------------- images

struct PreprocessSpec {
  Index resolution = 256;
  /// ImageNet statistics of the usual pretrained backbones.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};

  static PreprocessSpec identity(Index resolution) {
    return {resolution, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  }
};

/// Raster -> 1×3×R×R: bilinear resize, gray replicated to three channels,
/// scaled to [0,1], normalized per channel.
template <typename Scalar>
FeatureMaps<Scalar> preprocess(const Raster& raster, const PreprocessSpec& spec);

template <typename Scalar>
FeatureMaps<Scalar> load_and_preprocess(const std::filesystem::path& path,
                                        const PreprocessSpec& spec) {
  return preprocess<Scalar>(read_png(path), spec);
}

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace reidbench
