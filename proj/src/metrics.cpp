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

#include "reidbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "reidbench/errors.hpp"

namespace reidbench {
namespace {

/// Scores grouped into tie levels, ascending.
struct TieLevels {
  std::vector<size_t> order;        // sample indices sorted by score
  std::vector<size_t> level_start;  // offsets into order, plus end sentinel
};

TieLevels tie_levels(std::span<const ScoredPair> scored) {
  TieLevels t;
  t.order.resize(scored.size());
  std::iota(t.order.begin(), t.order.end(), size_t(0));
  std::stable_sort(t.order.begin(), t.order.end(),
                   [&](size_t a, size_t b) { return scored[a].score < scored[b].score; });
  for (size_t i = 0; i < t.order.size(); ++i)
    if (i == 0 || scored[t.order[i]].score != scored[t.order[i - 1]].score)
      t.level_start.push_back(i);
  t.level_start.push_back(t.order.size());
  return t;
}

void require_both_classes(std::span<const ScoredPair> scored) {
  bool pos = false, neg = false;
  for (const auto& s : scored) (s.label ? pos : neg) = true;
  if (!pos || !neg) throw Error("AUC needs both positive and negative pairs");
}

std::optional<double> ratio(size_t num, size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

double percentile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

double auc(std::span<const ScoredPair> scored) {
  require_both_classes(scored);
  const TieLevels t = tie_levels(scored);
  double negatives_below = 0, positives = 0, correct = 0;
  for (size_t l = 0; l + 1 < t.level_start.size(); ++l) {
    double p = 0, n = 0;
    for (size_t i = t.level_start[l]; i < t.level_start[l + 1]; ++i)
      (scored[t.order[i]].label ? p : n) += 1;
    correct += p * negatives_below + 0.5 * p * n;
    negatives_below += n;
    positives += p;
  }
  return correct / (positives * negatives_below);
}

RocCurve roc_and_auc(std::span<const ScoredPair> scored) {
  RocCurve curve;
  curve.auc = auc(scored);
  const TieLevels t = tie_levels(scored);
  double total_pos = 0, total_neg = 0;
  for (const auto& s : scored) (s.label ? total_pos : total_neg) += 1;

  double tp = 0, fp = 0;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (size_t l = t.level_start.size() - 1; l-- > 0;) {
    for (size_t i = t.level_start[l]; i < t.level_start[l + 1]; ++i)
      (scored[t.order[i]].label ? tp : fp) += 1;
    curve.points.push_back({fp / total_neg, tp / total_pos, scored[t.order[t.level_start[l]]].score});
  }
  return curve;
}

ConfidenceInterval bootstrap_auc_ci(std::span<const ScoredPair> scored, size_t n_boot,
                                    double alpha, std::uint64_t seed) {
  require_both_classes(scored);
  if (n_boot == 0) throw Error("bootstrap needs at least one resample");
  if (!(alpha > 0 && alpha < 1)) throw Error("alpha must lie in (0, 1)");

  // A resample is a multiset of the original pairs, so its AUC is the
  // count-weighted rank statistic over the original tie levels.
  const TieLevels t = tie_levels(scored);
  const size_t n = scored.size();
  std::vector<size_t> level_of(n);
  for (size_t l = 0; l + 1 < t.level_start.size(); ++l)
    for (size_t i = t.level_start[l]; i < t.level_start[l + 1]; ++i) level_of[t.order[i]] = l;
  const size_t levels = t.level_start.size() - 1;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  std::vector<double> pos_w(levels), neg_w(levels);
  std::vector<double> aucs;
  aucs.reserve(n_boot);
  while (aucs.size() < n_boot) {
    std::fill(pos_w.begin(), pos_w.end(), 0.0);
    std::fill(neg_w.begin(), neg_w.end(), 0.0);
    for (size_t k = 0; k < n; ++k) {
      const size_t i = pick(rng);
      (scored[i].label ? pos_w : neg_w)[level_of[i]] += 1;
    }
    double below = 0, positives = 0, correct = 0;
    for (size_t l = 0; l < levels; ++l) {
      correct += pos_w[l] * below + 0.5 * pos_w[l] * neg_w[l];
      below += neg_w[l];
      positives += pos_w[l];
    }
    if (positives == 0 || below == 0) continue;
    aucs.push_back(correct / (positives * below));
  }
  std::sort(aucs.begin(), aucs.end());
  return {percentile(aucs, alpha / 2), percentile(aucs, 1 - alpha / 2)};
}

VerificationReport confusion_metrics(std::span<const ScoredPair> scored, double threshold) {
  VerificationReport r;
  r.threshold = threshold;
  r.count = scored.size();
  Confusion& c = r.confusion;
  for (const auto& s : scored) {
    const bool predicted = s.score >= threshold;
    if (s.label)
      (predicted ? c.tp : c.fn) += 1;
    else
      (predicted ? c.fp : c.tn) += 1;
  }
  r.accuracy = ratio(c.tp + c.tn, scored.size());
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  if (r.precision && r.recall && (*r.precision + *r.recall) > 0)
    r.f1 = 2 * *r.precision * *r.recall / (*r.precision + *r.recall);
  return r;
}

VerificationReport evaluate_verification(std::span<const ScoredPair> scored, double threshold,
                                         size_t n_boot, double alpha, std::uint64_t seed) {
  VerificationReport r = confusion_metrics(scored, threshold);
  r.auc = auc(scored);
  if (n_boot > 0) {
    const auto ci = bootstrap_auc_ci(scored, n_boot, alpha, seed);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
  }
  r.n_boot = n_boot;
  return r;
}

RankedList RankedList::build(std::string query_id, std::vector<RankedEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.image_id < b.image_id;
  });
  RankedList out;
  out.query_id = std::move(query_id);
  out.entries = std::move(entries);
  for (const auto& e : out.entries) out.relevant_count += e.relevant ? 1 : 0;
  return out;
}

std::optional<double> r_precision(const RankedList& ranked) {
  const size_t big_r = ranked.relevant_count;
  if (big_r == 0) return std::nullopt;
  size_t hits = 0;
  for (size_t i = 0; i < big_r && i < ranked.entries.size(); ++i) hits += ranked.entries[i].relevant;
  return static_cast<double>(hits) / static_cast<double>(big_r);
}

std::optional<double> average_precision_at_r(const RankedList& ranked) {
  const size_t big_r = ranked.relevant_count;
  if (big_r == 0) return std::nullopt;
  double sum = 0;
  size_t hits = 0;
  for (size_t i = 0; i < big_r && i < ranked.entries.size(); ++i) {
    if (!ranked.entries[i].relevant) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(big_r);
}

namespace {

template <typename Fn>
double mean_over_queries(std::span<const RankedList> lists, Fn fn) {
  double sum = 0;
  size_t q = 0;
  for (const auto& l : lists) {
    if (auto v = fn(l)) {
      sum += *v;
      ++q;
    }
  }
  return q ? sum / static_cast<double>(q) : 0.0;
}

}  // namespace

double map_at_r(std::span<const RankedList> lists) {
  return mean_over_queries(lists, average_precision_at_r);
}

double mean_r_precision(std::span<const RankedList> lists) {
  return mean_over_queries(lists, r_precision);
}

double precision_at_1(std::span<const RankedList> lists) {
  size_t hits = 0, counted = 0;
  for (const auto& l : lists) {
    if (l.relevant_count == 0) continue;
    ++counted;
    hits += l.entries.front().relevant ? 1 : 0;
  }
  return counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
}

RetrievalReport evaluate_retrieval(std::span<const RankedList> lists) {
  std::vector<RankedList> answered;
  RetrievalReport r;
  for (const auto& l : lists) {
    if (l.relevant_count == 0)
      ++r.skipped;
    else
      answered.push_back(l);
  }
  r.queries = answered.size();
  r.map_at_r = map_at_r(answered);
  r.r_precision = mean_r_precision(answered);
  r.precision_at_1 = precision_at_1(answered);
  return r;
}

std::vector<TprBin> tpr_by_bins(std::span<const ScoredPair> scored, BinKey key,
                                double threshold) {
  std::map<int, TprBin> by_age;
  std::map<std::string, TprBin> by_name;
  for (const auto& s : scored) {
    if (!s.label) continue;
    TprBin* bin = nullptr;
    switch (key) {
      case BinKey::kAgeDiff: {
        if (!s.meta.age_diff_years) throw Error("positive pair lacks age difference metadata");
        const int years = std::abs(*s.meta.age_diff_years);
        if (years > kMaxAgeDiffBin) continue;
        bin = &by_age[years];
        bin->bin = std::to_string(years);
        break;
      }
      case BinKey::kAbnormality:
        if (!s.meta.abnormality) throw Error("positive pair lacks abnormality metadata");
        bin = &by_name[*s.meta.abnormality];
        bin->bin = *s.meta.abnormality;
        break;
      case BinKey::kView:
        if (!s.meta.view_changed) throw Error("positive pair lacks view metadata");
        bin = &by_name[*s.meta.view_changed ? "changed" : "same"];
        bin->bin = *s.meta.view_changed ? "changed" : "same";
        break;
    }
    bin->total += 1;
    bin->true_positives += s.score >= threshold ? 1 : 0;
  }
  std::vector<TprBin> out;
  auto finish = [&](TprBin b) {
    b.tpr = static_cast<double>(b.true_positives) / static_cast<double>(b.total);
    out.push_back(std::move(b));
  };
  for (auto& [_, b] : by_age) finish(b);
  for (auto& [_, b] : by_name) finish(b);
  return out;
}

}  // namespace reidbench
