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

#include "reidbench/reports.hpp"

#include <sstream>

#include "json.hpp"
#include "reidbench/csv.hpp"
#include "reidbench/format.hpp"

namespace reidbench {
namespace {

using nlohmann::ordered_json;

ordered_json header(const char* kind) {
  return {{"schema", "reid-bench/" + std::string(kind)}, {"schema_version", kReportSchemaVersion}};
}

void put_optional(ordered_json& j, ordered_json& undefined, const char* name,
                  const std::optional<double>& v) {
  if (v) {
    j[name] = *v;
  } else {
    j[name] = nullptr;
    undefined.push_back(name);
  }
}

ordered_json retrieval_json(const RetrievalReport& r) {
  return {{"map_at_r", r.map_at_r},
          {"r_precision", r.r_precision},
          {"precision_at_1", r.precision_at_1},
          {"queries", r.queries},
          {"skipped", r.skipped}};
}

std::string number(double v) { return format_double(v); }

std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

std::string bin_key_name(BinKey key) {
  switch (key) {
    case BinKey::kAgeDiff: return "age_diff";
    case BinKey::kAbnormality: return "abnormality";
    case BinKey::kView: return "view";
  }
  return "unknown";
}

}  // namespace

std::string to_json(const VerificationReport& r) {
  ordered_json j = header("verification");
  ordered_json undefined = ordered_json::array();
  j["threshold"] = r.threshold;
  j["count"] = r.count;
  put_optional(j, undefined, "auc", r.auc);
  put_optional(j, undefined, "ci_low", r.ci_low);
  put_optional(j, undefined, "ci_high", r.ci_high);
  j["n_boot"] = r.n_boot;
  put_optional(j, undefined, "accuracy", r.accuracy);
  put_optional(j, undefined, "specificity", r.specificity);
  put_optional(j, undefined, "recall", r.recall);
  put_optional(j, undefined, "precision", r.precision);
  put_optional(j, undefined, "f1", r.f1);
  j["confusion"] = {{"tp", r.confusion.tp},
                    {"fp", r.confusion.fp},
                    {"tn", r.confusion.tn},
                    {"fn", r.confusion.fn}};
  j["undefined"] = undefined;
  return j.dump(2) + "\n";
}

std::string to_json(const RetrievalReport& r, Index resolution) {
  ordered_json j = header("retrieval");
  if (resolution > 0) j["resolution"] = resolution;
  j.update(retrieval_json(r));
  return j.dump(2) + "\n";
}

std::string to_json(const AttackReport& r) {
  ordered_json j = header("attack");
  j["resolution"] = r.resolution;
  j["retrieval"] = retrieval_json(r.retrieval);
  ordered_json hits = ordered_json::array();
  for (const auto& h : r.hit_rates) hits.push_back({{"k", h.k}, {"rate", h.rate}});
  j["hit_rates"] = hits;
  ordered_json queries = ordered_json::array();
  for (const auto& q : r.queries) {
    ordered_json top = ordered_json::array();
    for (const auto& e : q.top)
      top.push_back({{"image_id", e.image_id}, {"distance", e.distance}, {"relevant", e.relevant}});
    ordered_json matches = ordered_json::array();
    for (const auto& m : q.verification_matches)
      matches.push_back({{"image_id", m.image_id}, {"score", m.score}});
    ordered_json entry = {{"query_id", q.query_id},
                          {"relevant_count", q.relevant_count},
                          {"hit_rank", q.hit_rank ? ordered_json(*q.hit_rank) : ordered_json()},
                          {"top", top}};
    if (!matches.empty()) entry["verification_matches"] = matches;
    queries.push_back(entry);
  }
  j["queries"] = queries;
  return j.dump(2) + "\n";
}

std::string to_json(const std::vector<TprBin>& bins, BinKey key, double threshold) {
  ordered_json j = header("tpr_bins");
  j["key"] = bin_key_name(key);
  j["threshold"] = threshold;
  ordered_json arr = ordered_json::array();
  for (const auto& b : bins)
    arr.push_back({{"bin", b.bin}, {"true_positives", b.true_positives}, {"total", b.total},
                   {"tpr", b.tpr}});
  j["bins"] = arr;
  return j.dump(2) + "\n";
}

std::string to_csv(const VerificationReport& r) {
  std::string out =
      "threshold,count,auc,ci_low,ci_high,n_boot,accuracy,specificity,recall,precision,f1,tp,fp,"
      "tn,fn\n";
  out += csv::join({number(r.threshold), std::to_string(r.count), cell(r.auc), cell(r.ci_low),
                    cell(r.ci_high), std::to_string(r.n_boot), cell(r.accuracy),
                    cell(r.specificity), cell(r.recall), cell(r.precision), cell(r.f1),
                    std::to_string(r.confusion.tp), std::to_string(r.confusion.fp),
                    std::to_string(r.confusion.tn), std::to_string(r.confusion.fn)});
  return out + "\n";
}

std::string to_csv(const RetrievalReport& r, Index resolution) {
  std::string out = "resolution,map_at_r,r_precision,precision_at_1,queries,skipped\n";
  out += csv::join({resolution > 0 ? std::to_string(resolution) : std::string(),
                    number(r.map_at_r), number(r.r_precision), number(r.precision_at_1),
                    std::to_string(r.queries), std::to_string(r.skipped)});
  return out + "\n";
}

std::string to_csv(const std::vector<TprBin>& bins) {
  std::string out = "bin,true_positives,total,tpr\n";
  for (const auto& b : bins)
    out += csv::join({b.bin, std::to_string(b.true_positives), std::to_string(b.total),
                      number(b.tpr)}) +
           "\n";
  return out;
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve.points) out += number(p.fpr) + "," + number(p.tpr) + "\n";
  return out;
}

std::string attack_queries_csv(const AttackReport& r) {
  std::string out = "query_id,hit_rank,top1_id,top1_distance\n";
  for (const auto& q : r.queries) {
    out += csv::join({q.query_id, q.hit_rank ? std::to_string(*q.hit_rank) : std::string(),
                      q.top.empty() ? std::string() : q.top.front().image_id,
                      q.top.empty() ? std::string() : number(q.top.front().distance)}) +
           "\n";
  }
  return out;
}

}  // namespace reidbench
