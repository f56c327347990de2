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

#include <string>
#include <vector>

#include "reidbench/attack.hpp"
#include "reidbench/metrics.hpp"

namespace reidbench {

inline constexpr int kReportSchemaVersion = 1;

/// Ratios with a zero denominator are written as null and listed under
/// "undefined".
std::string to_json(const VerificationReport& report);
std::string to_json(const RetrievalReport& report, Index resolution = 0);
std::string to_json(const AttackReport& report);
std::string to_json(const std::vector<TprBin>& bins, BinKey key, double threshold);

/// Header plus one row; undefined ratios are empty cells.
std::string to_csv(const VerificationReport& report);
std::string to_csv(const RetrievalReport& report, Index resolution = 0);
/// `bin,true_positives,total,tpr`
std::string to_csv(const std::vector<TprBin>& bins);

/// `fpr,tpr`
std::string roc_csv(const RocCurve& curve);
/// `query_id,hit_rank,top1_id,top1_distance`; hit_rank is empty when no
/// relevant entry exists.
std::string attack_queries_csv(const AttackReport& report);

}  // namespace reidbench
