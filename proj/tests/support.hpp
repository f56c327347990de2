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
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "reidbench/catalog.hpp"
#include "reidbench/image_store.hpp"
#include "reidbench/metrics.hpp"
#include "reidbench/synthetic.hpp"

namespace testing {

using namespace reidbench;

/// Records for patients "p0".."pN" with counts[i] images each.
inline Manifest manifest_with_counts(const std::vector<size_t>& counts) {
  std::vector<ImageRecord> records;
  for (size_t p = 0; p < counts.size(); ++p)
    for (size_t i = 0; i < counts[p]; ++i) {
      ImageRecord r;
      r.patient_id = "p" + std::to_string(p);
      r.image_id = r.patient_id + "_" + std::to_string(i) + ".png";
      r.follow_up_index = static_cast<int>(i);
      r.age_years = 40 + static_cast<int>(i);
      r.view = i % 2 ? View::kAP : View::kPA;
      r.gender = p % 2 ? Gender::kFemale : Gender::kMale;
      records.push_back(r);
    }
  return Manifest(std::move(records));
}

inline std::vector<size_t> random_counts(std::mt19937_64& rng, size_t max_patients,
                                         size_t max_images) {
  std::uniform_int_distribution<size_t> np(1, max_patients), ni(1, max_images);
  std::vector<size_t> counts(np(rng));
  for (auto& c : counts) c = ni(rng);
  return counts;
}

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("reidbench_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------- oracles

/// O(P·N) pairwise comparison.
inline double brute_auc(const std::vector<ScoredPair>& s) {
  double good = 0, total = 0;
  for (const auto& p : s)
    for (const auto& n : s) {
      if (p.label != 1 || n.label != 0) continue;
      total += 1;
      if (p.score > n.score) good += 1;
      else if (p.score == n.score) good += 0.5;
    }
  return good / total;
}

/// Relevance flags in ranked order, R = their sum.
inline double brute_r_precision(const std::vector<int>& rel) {
  size_t r = 0;
  for (int x : rel) r += x;
  size_t hit = 0;
  for (size_t i = 0; i < r; ++i) hit += rel[i];
  return double(hit) / double(r);
}

inline double brute_ap_at_r(const std::vector<int>& rel) {
  size_t r = 0;
  for (int x : rel) r += x;
  double sum = 0;
  for (size_t i = 1; i <= r; ++i) {
    if (!rel[i - 1]) continue;
    size_t hits = 0;
    for (size_t j = 0; j < i; ++j) hits += rel[j];
    sum += double(hits) / double(i);
  }
  return sum / double(r);
}

inline RankedList ranked_from_flags(const std::vector<int>& rel, const std::string& query = "q") {
  std::vector<RankedEntry> entries;
  for (size_t i = 0; i < rel.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "g%05zu", i);
    entries.push_back({id, double(i), rel[i]});
  }
  return RankedList::build(query, std::move(entries));
}

/// Synthetic images preprocessed into an in-memory store.
template <typename Scalar>
Manifest synthetic_in_memory(const SyntheticSpec& spec, ImageStore<Scalar>& store) {
  std::vector<ImageRecord> records;
  for (auto& img : render_dataset(spec)) {
    store.put(img.record.image_id, preprocess<Scalar>(img.raster, store.spec()));
    records.push_back(std::move(img.record));
  }
  return Manifest(std::move(records));
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace testing
