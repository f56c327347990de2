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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reidbench {

/// Optional per-pair context used for robustness binning.
struct PairMeta {
  std::optional<int> age_diff_years;
  std::optional<std::string> abnormality;  // e.g. "unchanged", "changed"
  std::optional<bool> view_changed;
};

struct ScoredPair {
  double score = 0;
  int label = 0;
  PairMeta meta;
};

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;  // predictions with score >= threshold are positive
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

/// Tie-aware rank statistic: fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half. Throws if a class is missing.
double auc(std::span<const ScoredPair> scored);
RocCurve roc_and_auc(std::span<const ScoredPair> scored);

struct ConfidenceInterval {
  double low = 0;
  double high = 0;
};

/// Percentile bootstrap CI of the AUC. Resamples lacking a class are
/// redrawn. Percentiles interpolate linearly between order statistics.
ConfidenceInterval bootstrap_auc_ci(std::span<const ScoredPair> scored, size_t n_boot = 10000,
                                    double alpha = 0.05, std::uint64_t seed = 0);

struct Confusion {
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Ratios with a zero denominator are absent rather than 0.
struct VerificationReport {
  double threshold = 0.5;
  Confusion confusion;
  std::optional<double> accuracy, specificity, recall, precision, f1;
  // Filled by evaluate_verification.
  std::optional<double> auc;
  std::optional<double> ci_low, ci_high;
  size_t n_boot = 0;
  size_t count = 0;
};

VerificationReport confusion_metrics(std::span<const ScoredPair> scored, double threshold = 0.5);

/// confusion_metrics + AUC + bootstrap CI.
VerificationReport evaluate_verification(std::span<const ScoredPair> scored, double threshold,
                                         size_t n_boot, double alpha, std::uint64_t seed);

struct RankedEntry {
  std::string image_id;
  double distance = 0;
  int relevant = 0;
};

/// Gallery ordered by ascending distance, ties broken by ascending image id.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
  size_t relevant_count = 0;  // R

  /// Sorts `entries` and sets R from the relevance flags.
  static RankedList build(std::string query_id, std::vector<RankedEntry> entries);
};

/// r / R over the first R entries; absent when R = 0.
std::optional<double> r_precision(const RankedList& ranked);
/// (1/R)·Σ_{i≤R} P@i·rel@i; absent when R = 0.
std::optional<double> average_precision_at_r(const RankedList& ranked);
/// Means over queries with R ≥ 1.
double map_at_r(std::span<const RankedList> lists);
double mean_r_precision(std::span<const RankedList> lists);
/// Fraction of lists (with R ≥ 1) whose first entry is relevant.
double precision_at_1(std::span<const RankedList> lists);

struct RetrievalReport {
  double map_at_r = 0;
  double r_precision = 0;
  double precision_at_1 = 0;
  size_t queries = 0;  // Q, queries with R ≥ 1
  size_t skipped = 0;  // queries with R = 0
};

RetrievalReport evaluate_retrieval(std::span<const RankedList> lists);

enum class BinKey { kAgeDiff, kAbnormality, kView };

inline constexpr int kMaxAgeDiffBin = 12;

struct TprBin {
  std::string bin;
  size_t true_positives = 0;
  size_t total = 0;
  double tpr = 0;
};

/// Partitions positive pairs by `key` and reports per-bin TPR at threshold
/// t. Age bins are whole years 0..12 (larger differences dropped); view bins
/// are "same"/"changed"; abnormality bins are the category strings. Bins
/// without pairs are omitted. Throws if a positive pair lacks the key.
std::vector<TprBin> tpr_by_bins(std::span<const ScoredPair> scored, BinKey key,
                                double threshold = 0.5);

}  // namespace reidbench
