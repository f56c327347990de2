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

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reidbench/catalog.hpp"
#include "reidbench/metrics.hpp"
#include "reidbench/models.hpp"

namespace reidbench {

/// Embeddings of a gallery, stored as float32 columns.
class GalleryIndex {
 public:
  using Storage = Eigen::Map<const Eigen::Matrix<float, kEmbeddingDim, Eigen::Dynamic>>;

  std::string model_id;
  Index resolution = 0;

  size_t size() const { return image_ids_.size(); }
  bool empty() const { return image_ids_.empty(); }
  const std::vector<std::string>& image_ids() const { return image_ids_; }
  const std::vector<std::string>& patient_ids() const { return patient_ids_; }
  Storage embeddings() const {
    return Storage(values_.data(), kEmbeddingDim, static_cast<Index>(size()));
  }
  Embedding<float> embedding(size_t i) const { return embeddings().col(static_cast<Index>(i)); }
  std::optional<size_t> position(const std::string& image_id) const;

  /// Throws if image_id is already present or the embedding is not finite.
  void add(const std::string& image_id, const std::string& patient_id,
           const Embedding<float>& embedding);

  /// Euclidean distances (computed in double) from `query` to every entry.
  Eigen::VectorXd distances(const Embedding<float>& query) const;

  /// Images that failed to load during build_index: (image_id, message).
  std::vector<std::pair<std::string, std::string>> errors;

  std::string to_bytes() const;
  static GalleryIndex from_bytes(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static GalleryIndex load(const std::filesystem::path& path);

 private:
  std::vector<std::string> image_ids_;
  std::vector<std::string> patient_ids_;
  std::unordered_map<std::string, size_t> positions_;
  std::vector<float> values_;  // column-major kEmbeddingDim x size()
};

/// Embeds every manifest image. Unreadable images are recorded in
/// `errors` and skipped.
template <typename Scalar>
GalleryIndex build_index(const Manifest& manifest,
                         const std::function<Embedding<Scalar>(const FeatureMaps<Scalar>&)>& embed_fn,
                         const PreprocessSpec& spec, std::string model_id = {});

/// Gallery sorted by ascending distance (ties by image id), relevance by
/// patient id. With exclude_self, the entry whose image id equals
/// query_id is dropped.
RankedList rank_query(const Embedding<float>& query, const std::string& query_id,
                      const std::string& query_patient, const GalleryIndex& index,
                      bool exclude_self = true);

struct VerificationMatch {
  std::string image_id;
  double score = 0;
};

/// Scores the query against every gallery image; returns those with
/// score >= threshold, in gallery order.
template <typename Scalar>
std::vector<VerificationMatch> verification_sweep(
    const FeatureMaps<Scalar>& query, const Manifest& gallery,
    const std::function<double(const FeatureMaps<Scalar>&, const FeatureMaps<Scalar>&)>& verif_fn,
    double threshold, const PreprocessSpec& spec);

struct QueryOutcome {
  std::string query_id;
  std::vector<RankedEntry> top;      // first top_k entries
  std::optional<size_t> hit_rank;    // 1-based rank of the first relevant entry
  size_t relevant_count = 0;
  std::vector<VerificationMatch> verification_matches;
};

struct HitRate {
  size_t k = 0;
  double rate = 0;
};

struct AttackReport {
  Index resolution = 0;
  std::vector<QueryOutcome> queries;
  RetrievalReport retrieval;  // over queries with R >= 1
  std::vector<HitRate> hit_rates;
};

/// Ranks every query against the gallery and aggregates. Queries with no
/// relevant gallery entry are kept in `queries` but counted as skipped.
AttackReport attack_report(const GalleryIndex& queries, const GalleryIndex& gallery,
                           const std::vector<size_t>& k_list, bool exclude_self = true,
                           size_t top_k = 10);

/// Ranked lists for every query (used by reports and training validation).
std::vector<RankedList> rank_all(const GalleryIndex& queries, const GalleryIndex& gallery,
                                 bool exclude_self = true);

}  // namespace reidbench
