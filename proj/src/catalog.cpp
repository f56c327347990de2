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

#include "reidbench/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "reidbench/csv.hpp"

namespace reidbench {

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::kMale: return "M";
    case Gender::kFemale: return "F";
    default: return "";
  }
}

std::string_view to_string(View v) {
  switch (v) {
    case View::kAP: return "AP";
    case View::kPA: return "PA";
    default: return "";
  }
}

Manifest::Manifest(std::vector<ImageRecord> records, std::vector<ParseIssue> issues)
    : records_(std::move(records)), issues_(std::move(issues)) {
  by_id_.reserve(records_.size());
  for (size_t i = 0; i < records_.size(); ++i) {
    if (!by_id_.emplace(records_[i].image_id, i).second)
      throw SchemaError("duplicate image id '" + records_[i].image_id + "'");
    patients_[records_[i].patient_id].push_back(i);
  }
}

const ImageRecord* Manifest::find(std::string_view image_id) const {
  auto it = by_id_.find(std::string(image_id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

ManifestSchema ManifestSchema::chestxray14(std::filesystem::path image_root) {
  ManifestSchema s;
  s.image_root = std::move(image_root);
  return s;
}

std::optional<int> parse_age_years(std::string_view raw) {
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
  if (raw.empty()) return std::nullopt;

  double per_year = 1.0;
  const char unit = static_cast<char>(std::toupper(static_cast<unsigned char>(raw.back())));
  if (std::isalpha(static_cast<unsigned char>(unit))) {
    switch (unit) {
      case 'Y': per_year = 1.0; break;
      case 'M': per_year = 12.0; break;
      case 'W': per_year = 52.0; break;
      case 'D': per_year = 365.0; break;
      default: return std::nullopt;
    }
    raw.remove_suffix(1);
  }
  long value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size() || value < 0) return std::nullopt;
  const double years = std::floor(static_cast<double>(value) / per_year);
  return static_cast<int>(std::min<double>(years, kMaxAgeYears));
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::set<std::string> split_findings(const std::string& cell) {
  std::set<std::string> out;
  std::stringstream ss(cell);
  std::string item;
  while (std::getline(ss, item, '|')) {
    item = trim(item);
    if (!item.empty()) out.insert(item);
  }
  if (out.empty()) out.insert(kNoFinding);
  return out;
}

}  // namespace

Manifest parse_manifest(std::string_view csv_content, const ManifestSchema& schema) {
  const auto rows = csv::parse(csv_content);
  if (rows.empty()) throw SchemaError("manifest has no header row");

  std::map<std::string, size_t> columns;
  for (size_t i = 0; i < rows[0].size(); ++i) columns[trim(rows[0][i])] = i;
  auto require = [&](const std::string& name) {
    auto it = columns.find(name);
    if (it == columns.end()) throw SchemaError("manifest is missing required column '" + name + "'");
    return it->second;
  };
  const size_t c_id = require(schema.image_id);
  const size_t c_patient = require(schema.patient_id);
  const size_t c_follow = require(schema.follow_up);
  const size_t c_age = require(schema.age);
  const size_t c_gender = require(schema.gender);
  const size_t c_view = require(schema.view);
  const size_t c_findings = require(schema.findings);
  std::optional<size_t> c_path;
  if (!schema.path.empty() && columns.count(schema.path)) c_path = columns[schema.path];

  std::vector<ImageRecord> records;
  std::vector<ParseIssue> issues;
  records.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](size_t c) { return c < row.size() ? trim(row[c]) : std::string(); };

    ImageRecord rec;
    rec.image_id = cell(c_id);
    rec.patient_id = cell(c_patient);
    if (rec.image_id.empty() || rec.patient_id.empty()) {
      issues.push_back({r, rec.image_id.empty() ? schema.image_id : schema.patient_id, "empty identifier; row skipped"});
      continue;
    }
    const std::string follow = cell(c_follow);
    int fu = 0;
    auto [p, ec] = std::from_chars(follow.data(), follow.data() + follow.size(), fu);
    if (ec != std::errc() || p != follow.data() + follow.size() || fu < 0) {
      issues.push_back({r, schema.follow_up, "unparseable follow-up index '" + follow + "'"});
      fu = 0;
    }
    rec.follow_up_index = fu;

    const std::string age = cell(c_age);
    if (auto years = parse_age_years(age)) {
      rec.age_years = *years;
    } else {
      rec.age_years = 0;
      rec.age_valid = false;
      issues.push_back({r, schema.age, "unparseable age '" + age + "'"});
    }

    const std::string g = cell(c_gender);
    rec.gender = g == "M" ? Gender::kMale : g == "F" ? Gender::kFemale : Gender::kUnknown;
    const std::string v = cell(c_view);
    rec.view = v == "AP" ? View::kAP : v == "PA" ? View::kPA : View::kUnknown;
    rec.finding_labels = split_findings(cell(c_findings));

    const std::string path = c_path ? cell(*c_path) : std::string();
    if (path.empty())
      rec.source_path = schema.image_root / rec.image_id;
    else if (std::filesystem::path(path).is_relative())
      rec.source_path = schema.image_root / path;
    else
      rec.source_path = path;
    records.push_back(std::move(rec));
  }
  return Manifest(std::move(records), std::move(issues));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string(), "cannot open file for writing");
  out << text;
  if (!out) throw LoadError(path.string(), "write failed");
}

Manifest read_manifest(const std::filesystem::path& path, const ManifestSchema& schema) {
  if (!schema.image_root.empty()) return parse_manifest(read_text_file(path), schema);
  // Relative image paths resolve against the manifest's directory.
  ManifestSchema local = schema;
  local.image_root = path.parent_path();
  return parse_manifest(read_text_file(path), local);
}

std::string serialize_manifest(const Manifest& manifest) {
  const ManifestSchema s;
  std::string out = csv::join({s.image_id, s.findings, s.follow_up, s.patient_id, s.age,
                               s.gender, s.view, s.path}) +
                    "\n";
  for (const auto& r : manifest.records()) {
    std::string findings;
    for (const auto& f : r.finding_labels) findings += (findings.empty() ? "" : "|") + f;
    out += csv::join({r.image_id, findings, std::to_string(r.follow_up_index), r.patient_id,
                      r.age_valid ? std::to_string(r.age_years) : std::string(),
                      std::string(to_string(r.gender)), std::string(to_string(r.view)),
                      r.source_path.string()});
    out += "\n";
  }
  return out;
}

Manifest filter_manifest(const Manifest& manifest,
                         const std::function<bool(const ImageRecord&)>& predicate) {
  std::vector<ImageRecord> kept;
  for (const auto& r : manifest.records())
    if (predicate(r)) kept.push_back(r);
  return Manifest(std::move(kept));
}

// ---------------------------------------------------------------- splits

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "";
}

Split parse_split_name(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw SchemaError("unknown split name '" + std::string(name) + "' (valid: train, val, test)");
}

Split SplitAssignment::of(const std::string& patient_id) const {
  auto it = assignment.find(patient_id);
  if (it == assignment.end()) throw SchemaError("patient '" + patient_id + "' has no split");
  return it->second;
}

SplitAssignment patient_wise_split(const Manifest& manifest, std::array<double, 3> fractions,
                                   std::uint64_t seed) {
  if (manifest.empty()) throw Error("cannot split an empty manifest");
  double total = 0;
  for (double f : fractions) {
    if (!(f >= 0)) throw Error("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("split fractions must sum to 1");

  std::vector<const std::string*> patients;
  for (const auto& [id, _] : manifest.patient_index()) patients.push_back(&id);
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);

  const double n_images = static_cast<double>(manifest.size());
  std::array<double, 3> assigned{0, 0, 0};
  SplitAssignment out;
  out.fractions = fractions;
  out.seed = seed;
  for (const std::string* id : patients) {
    int best = -1;
    double best_deficit = 0;
    for (int s = 0; s < 3; ++s) {
      if (fractions[s] <= 0) continue;
      const double deficit = fractions[s] * n_images - assigned[s];
      if (best < 0 || deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    assigned[best] += static_cast<double>(manifest.patient_index().at(*id).size());
    out.assignment[*id] = static_cast<Split>(best);
  }
  return out;
}

std::string serialize_split(const SplitAssignment& split) {
  std::string out;
  for (const auto& [id, s] : split.assignment)
    out += csv::join({id, std::string(to_string(s))}) + "\n";
  return out;
}

SplitAssignment parse_split(std::string_view text) {
  SplitAssignment out;
  for (const auto& row : csv::parse(text)) {
    if (row.size() != 2) throw SchemaError("split file rows must be 'patient_id,split_name'");
    if (!out.assignment.emplace(trim(row[0]), parse_split_name(trim(row[1]))).second)
      throw SchemaError("patient '" + row[0] + "' assigned twice in split file");
  }
  return out;
}

Manifest split_subset(const Manifest& manifest, const SplitAssignment& split, Split which) {
  return filter_manifest(manifest,
                         [&](const ImageRecord& r) { return split.of(r.patient_id) == which; });
}

// ---------------------------------------------------------------- images

template <typename Scalar>
FeatureMaps<Scalar> preprocess(const Raster& raster, const PreprocessSpec& spec) {
  if (raster.channels != 1 && raster.channels != 3)
    throw ShapeError("raster must have 1 or 3 channels");
  if (spec.resolution <= 0) throw ShapeError("preprocess resolution must be positive");
  const Index r = spec.resolution;
  FeatureMaps<Scalar> out = FeatureMaps<Scalar>::zeros({1, 3, r, r});
  for (Index c = 0; c < 3; ++c) {
    const Index src_c = raster.channels == 1 ? 0 : c;
    Plane<Scalar> plane(raster.height, raster.width);
    for (Index y = 0; y < raster.height; ++y)
      for (Index x = 0; x < raster.width; ++x)
        plane(y, x) = static_cast<Scalar>(raster.at(y, x, src_c)) / Scalar(255);
    const Plane<Scalar> resized = resize_bilinear(plane, r, r);
    const auto mean = static_cast<Scalar>(spec.mean[static_cast<size_t>(c)]);
    const auto sd = static_cast<Scalar>(spec.stddev[static_cast<size_t>(c)]);
    // Row-major plane data is already in (y * R + x) column order.
    out.data.row(c) =
        (Eigen::Map<const RowVectorX<Scalar>>(resized.data(), r * r).array() - mean) / sd;
  }
  return out;
}

template FeatureMaps<float> preprocess<float>(const Raster&, const PreprocessSpec&);
template FeatureMaps<double> preprocess<double>(const Raster&, const PreprocessSpec&);

}  // namespace reidbench
