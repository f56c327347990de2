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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "reidbench/metrics.hpp"
#include "support.hpp"

using namespace reidbench;
using doctest::Approx;

namespace {

std::vector<ScoredPair> scored(std::vector<double> pos, std::vector<double> neg) {
  std::vector<ScoredPair> out;
  for (double s : pos) out.push_back({s, 1, {}});
  for (double s : neg) out.push_back({s, 0, {}});
  return out;
}

std::vector<ScoredPair> random_scored(std::mt19937_64& rng, size_t n, bool coarse) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ScoredPair> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i].label = int(rng() % 2);
    const double s = u(rng) * 0.6 + 0.4 * out[i].label;
    out[i].score = coarse ? std::round(s * 10) / 10 : s;
  }
  out[0].label = 1;
  out[1].label = 0;
  return out;
}

Confusion brute_confusion(const std::vector<ScoredPair>& s, double t) {
  Confusion c;
  for (const auto& p : s) {
    const bool pred = p.score >= t;
    if (pred && p.label) ++c.tp;
    else if (pred) ++c.fp;
    else if (p.label) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace

TEST_CASE("AUC of the two-by-two example is 3/4") {
  const auto s = scored({0.8, 0.6}, {0.7, 0.2});
  CHECK(auc(s) == 0.75);
  CHECK(roc_and_auc(s).auc == 0.75);
}

TEST_CASE("perfect separation gives AUC 1 and a degenerate CI") {
  const auto s = scored({0.9, 0.8, 0.95}, {0.1, 0.3});
  CHECK(auc(s) == 1.0);
  const auto ci = bootstrap_auc_ci(s, 500, 0.05, 1);
  CHECK(ci.low == 1.0);
  CHECK(ci.high == 1.0);
}

TEST_CASE("single-class input is an error") {
  CHECK_THROWS(auc(scored({0.1, 0.2}, {})));
  CHECK_THROWS(roc_and_auc(scored({}, {0.3})));
  CHECK_THROWS(bootstrap_auc_ci(scored({0.4}, {}), 10, 0.05, 1));
}

TEST_CASE("AUC matches the pairwise oracle, with and without ties") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_scored(rng, 2 + rng() % 999, t % 2 == 0);
    CHECK(std::abs(auc(s) - testing::brute_auc(s)) <= 1e-12);
    CHECK(std::abs(roc_and_auc(s).auc - testing::brute_auc(s)) <= 1e-12);
  }
}

TEST_CASE("shuffled labels give AUC near one half") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ScoredPair> s(20000);
  for (auto& p : s) p = {u(rng), int(rng() % 2), {}};
  // sd of the Mann-Whitney statistic at n1 = n2 = 10,000 is about 0.0029
  CHECK(std::abs(auc(s) - 0.5) < 3 * 0.0029);
}

TEST_CASE("ROC runs from (0,0) to (1,1) and is monotone") {
  std::mt19937_64 rng(3);
  const auto s = random_scored(rng, 300, true);
  const auto roc = roc_and_auc(s);
  REQUIRE(roc.points.size() >= 2);
  CHECK(roc.points.front().fpr == 0);
  CHECK(roc.points.front().tpr == 0);
  CHECK(roc.points.back().fpr == 1);
  CHECK(roc.points.back().tpr == 1);
  for (size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
  }
  // trapezoid area equals the rank statistic
  double area = 0;
  for (size_t i = 1; i < roc.points.size(); ++i)
    area += (roc.points[i].fpr - roc.points[i - 1].fpr) *
            (roc.points[i].tpr + roc.points[i - 1].tpr) / 2;
  CHECK(area == Approx(roc.auc).epsilon(1e-12));
  // every point matches the confusion counts at its threshold
  for (const auto& pt : roc.points) {
    if (!std::isfinite(pt.threshold)) continue;
    const Confusion c = brute_confusion(s, pt.threshold);
    CHECK(pt.tpr == Approx(double(c.tp) / double(c.tp + c.fn)));
    CHECK(pt.fpr == Approx(double(c.fp) / double(c.fp + c.tn)));
  }
}

TEST_CASE("confusion example TP=3 FP=1 TN=4 FN=2") {
  const auto s = scored({0.9, 0.8, 0.5, 0.4, 0.1}, {0.7, 0.3, 0.2, 0.1, 0.0});
  const auto r = confusion_metrics(s, 0.5);
  CHECK(r.confusion == Confusion{3, 1, 4, 2});
  CHECK(*r.recall == Approx(0.6));
  CHECK(*r.precision == Approx(0.75));
  CHECK(*r.f1 == Approx(2.0 / (1 / 0.6 + 1 / 0.75)));
  CHECK(*r.accuracy == Approx(0.7));
  CHECK(*r.specificity == Approx(0.8));
}

TEST_CASE("threshold is inclusive") {
  const auto r = confusion_metrics(scored({0.5}, {0.49}), 0.5);
  CHECK(r.confusion == Confusion{1, 0, 1, 0});
}

TEST_CASE("all-correct predictions and degenerate denominators") {
  const auto good = confusion_metrics(scored({0.9, 0.6}, {0.1}), 0.5);
  CHECK(*good.accuracy == 1);
  CHECK(*good.recall == 1);
  CHECK(*good.precision == 1);
  CHECK(*good.f1 == 1);

  const auto none = confusion_metrics(scored({0.1, 0.2}, {0.3}), 0.5);
  CHECK_FALSE(none.precision.has_value());
  CHECK(*none.recall == 0);
  CHECK_FALSE(none.f1.has_value());

  const auto no_neg = confusion_metrics(scored({0.9}, {}), 0.5);
  CHECK_FALSE(no_neg.specificity.has_value());
  const auto empty = confusion_metrics(std::vector<ScoredPair>{}, 0.5);
  CHECK_FALSE(empty.accuracy.has_value());
}

TEST_CASE("confusion metrics match hand counts on random sets") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_scored(rng, 2 + rng() % 500, t % 3 == 0);
    const double thr = double(rng() % 11) / 10;
    const Confusion c = brute_confusion(s, thr);
    const auto r = confusion_metrics(s, thr);
    CHECK(r.confusion == c);
    CHECK(*r.accuracy == double(c.tp + c.tn) / double(s.size()));
    if (c.tp + c.fn) CHECK(*r.recall == double(c.tp) / double(c.tp + c.fn));
    if (c.tp + c.fp) CHECK(*r.precision == double(c.tp) / double(c.tp + c.fp));
  }
}

TEST_CASE("raising the threshold never raises recall nor lowers specificity") {
  std::mt19937_64 rng(5);
  const auto s = random_scored(rng, 400, false);
  double prev_recall = 2, prev_spec = -1;
  for (int i = 0; i <= 100; ++i) {
    const auto r = confusion_metrics(s, i / 100.0);
    CHECK(*r.recall <= prev_recall);
    CHECK(*r.specificity >= prev_spec);
    prev_recall = *r.recall;
    prev_spec = *r.specificity;
  }
}

TEST_CASE("bootstrap CI brackets the point AUC and is reproducible") {
  std::mt19937_64 rng(6);
  const auto s = random_scored(rng, 300, false);
  const double point = auc(s);
  const auto a = bootstrap_auc_ci(s, 2000, 0.05, 9);
  const auto b = bootstrap_auc_ci(s, 2000, 0.05, 9);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low <= point);
  CHECK(point <= a.high);
  CHECK(a.low >= 0);
  CHECK(a.high <= 1);
}

TEST_CASE("bootstrap redraws resamples lacking a class") {
  // one positive among many negatives: many resamples miss it
  std::vector<ScoredPair> s = scored({0.9}, {});
  for (int i = 0; i < 30; ++i) s.push_back({0.01 * i, 0, {}});
  const auto ci = bootstrap_auc_ci(s, 200, 0.05, 3);
  CHECK(ci.low == 1.0);
  CHECK(ci.high == 1.0);
}

TEST_CASE("evaluate_verification fills AUC and CI") {
  std::mt19937_64 rng(7);
  const auto s = random_scored(rng, 100, false);
  const auto r = evaluate_verification(s, 0.5, 300, 0.05, 1);
  CHECK(*r.auc == auc(s));
  CHECK(r.ci_low.has_value());
  CHECK(r.n_boot == 300);
  CHECK(r.count == 100);
}

// ---------------------------------------------------------------- retrieval

TEST_CASE("R-Precision and AP@R examples") {
  const auto a = testing::ranked_from_flags({1, 0, 1, 0});
  CHECK(a.relevant_count == 2);
  CHECK(*r_precision(a) == 0.5);
  CHECK(*average_precision_at_r(a) == 0.5);

  const auto perfect = testing::ranked_from_flags({1, 1, 0});
  CHECK(*r_precision(perfect) == 1.0);
  CHECK(*average_precision_at_r(perfect) == 1.0);

  const auto late = testing::ranked_from_flags({0, 1, 1, 1, 0});
  CHECK(*average_precision_at_r(late) == Approx((0 + 0.5 + 2.0 / 3) / 3).epsilon(1e-15));
  CHECK(*average_precision_at_r(late) == Approx(0.3889).epsilon(1e-4));

  const auto none = testing::ranked_from_flags({0, 0});
  CHECK_FALSE(r_precision(none).has_value());
  CHECK_FALSE(average_precision_at_r(none).has_value());
}

TEST_CASE("precision@1 with 3 of 4 hits") {
  std::vector<RankedList> lists{testing::ranked_from_flags({1, 0}), testing::ranked_from_flags({1}),
                                testing::ranked_from_flags({0, 1}),
                                testing::ranked_from_flags({1, 1})};
  CHECK(precision_at_1(lists) == 0.75);
}

TEST_CASE("retrieval metrics match brute force on random lists") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const size_t q = 1 + rng() % 20;
    std::vector<RankedList> lists;
    double sum_ap = 0, sum_rp = 0, hits = 0;
    size_t counted = 0, skipped = 0;
    for (size_t i = 0; i < q; ++i) {
      std::vector<int> rel(1 + rng() % 50);
      for (auto& r : rel) r = rng() % 4 == 0;
      lists.push_back(testing::ranked_from_flags(rel, "q" + std::to_string(i)));
      size_t r = 0;
      for (int x : rel) r += x;
      if (r == 0) {
        ++skipped;
        continue;
      }
      ++counted;
      sum_ap += testing::brute_ap_at_r(rel);
      sum_rp += testing::brute_r_precision(rel);
      hits += rel[0];
      CHECK(std::abs(*average_precision_at_r(lists.back()) - testing::brute_ap_at_r(rel)) <= 1e-12);
      CHECK(std::abs(*r_precision(lists.back()) - testing::brute_r_precision(rel)) <= 1e-12);
      CHECK((*average_precision_at_r(lists.back()) == 1.0) ==
            (std::accumulate(rel.begin(), rel.begin() + long(r), 0) == int(r)));
    }
    const auto report = evaluate_retrieval(lists);
    CHECK(report.queries == counted);
    CHECK(report.skipped == skipped);
    if (counted) {
      CHECK(std::abs(report.map_at_r - sum_ap / double(counted)) <= 1e-12);
      CHECK(std::abs(report.r_precision - sum_rp / double(counted)) <= 1e-12);
      CHECK(std::abs(report.precision_at_1 - hits / double(counted)) <= 1e-12);
    }
    // query order does not matter
    std::shuffle(lists.begin(), lists.end(), rng);
    const auto again = evaluate_retrieval(lists);
    CHECK(std::abs(again.map_at_r - report.map_at_r) <= 1e-12);
  }
}

TEST_CASE("ranked list sorts by distance then image id") {
  const auto l = RankedList::build("q", {{"b", 1.0, 0}, {"a", 1.0, 1}, {"c", 0.5, 0}});
  REQUIRE(l.entries.size() == 3);
  CHECK(l.entries[0].image_id == "c");
  CHECK(l.entries[1].image_id == "a");
  CHECK(l.entries[2].image_id == "b");
  CHECK(l.relevant_count == 1);
}

// ---------------------------------------------------------------- binning

TEST_CASE("age bins reproduce hand counts and omit empty bins") {
  std::vector<ScoredPair> s;
  // bin 0: 3 of 4 detected; bin 2: 1 of 2; bin 12: 0 of 1; 13 excluded
  auto add = [&](int age, double score) {
    ScoredPair p{score, 1, {}};
    p.meta.age_diff_years = age;
    s.push_back(p);
  };
  add(0, 0.9); add(0, 0.8); add(0, 0.7); add(0, 0.2);
  add(2, 0.6); add(2, 0.1);
  add(12, 0.3);
  add(13, 0.9);
  s.push_back({0.9, 0, {}});  // negatives ignored, even without meta
  const auto bins = tpr_by_bins(s, BinKey::kAgeDiff, 0.5);
  REQUIRE(bins.size() == 3);
  CHECK(bins[0].bin == "0");
  CHECK(bins[0].true_positives == 3);
  CHECK(bins[0].total == 4);
  CHECK(bins[0].tpr == 0.75);
  CHECK(bins[1].bin == "2");
  CHECK(bins[1].tpr == 0.5);
  CHECK(bins[2].bin == "12");
  CHECK(bins[2].tpr == 0);
  CHECK(bins[2].total == 1);
}

TEST_CASE("view and abnormality bins") {
  std::vector<ScoredPair> s;
  for (int i = 0; i < 6; ++i) {
    ScoredPair p{i < 4 ? 0.9 : 0.1, 1, {}};
    p.meta.view_changed = i % 2 == 1;
    p.meta.abnormality = i < 3 ? "unchanged" : "changed";
    s.push_back(p);
  }
  const auto view = tpr_by_bins(s, BinKey::kView, 0.5);
  REQUIRE(view.size() == 2);
  std::map<std::string, TprBin> by;
  for (const auto& b : view) by[b.bin] = b;
  CHECK(by["same"].true_positives == 2);
  CHECK(by["same"].total == 3);
  CHECK(by["changed"].true_positives == 2);
  const auto ab = tpr_by_bins(s, BinKey::kAbnormality, 0.5);
  by.clear();
  for (const auto& b : ab) by[b.bin] = b;
  CHECK(by["unchanged"].tpr == 1.0);
  CHECK(by["changed"].tpr == Approx(1.0 / 3));
}

TEST_CASE("positive pair without the key is an error") {
  std::vector<ScoredPair> s{{0.9, 1, {}}};
  CHECK_THROWS(tpr_by_bins(s, BinKey::kAgeDiff, 0.5));
}
