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

#include "reidbench/mining.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

#include "reidbench/csv.hpp"
#include "reidbench/random.hpp"

namespace reidbench {
namespace {

std::uint64_t unordered_key(size_t a, size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

size_t cross_patient_pair_count(const Manifest& m) {
  const size_t n = m.size();
  size_t same = 0;
  for (const auto& [_, pos] : m.patient_index()) same += pos.size() * (pos.size() - 1) / 2;
  return n * (n - 1) / 2 - same;
}

}  // namespace

size_t PairSet::positives() const {
  return static_cast<size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const PairSample& p) { return p.label == 1; }));
}

PairSet mine_positive_pairs(const Manifest& manifest) {
  PairSet out;
  for (const auto& [_, pos] : manifest.patient_index())
    for (size_t i = 0; i < pos.size(); ++i)
      for (size_t j = i + 1; j < pos.size(); ++j)
        out.pairs.push_back({manifest[pos[i]].image_id, manifest[pos[j]].image_id, 1});
  return out;
}

PairSet sample_negative_pairs(const Manifest& manifest, size_t count, std::uint64_t seed) {
  PairSet out;
  if (count == 0) return out;
  if (manifest.patient_count() < 2)
    throw Error("negative sampling needs at least two patients");
  const size_t available = cross_patient_pair_count(manifest);
  if (count > available)
    throw Error("requested " + std::to_string(count) + " negative pairs but only " +
                std::to_string(available) + " cross-patient pairs exist");
  if (manifest.size() >= (size_t(1) << 32)) throw Error("manifest too large for pair keys");

  std::mt19937_64 rng(seed);
  const size_t n = manifest.size();
  out.pairs.reserve(count);

  if (count * 2 > available) {
    // Dense request: enumerate and take a seeded sample without replacement.
    std::vector<std::pair<size_t, size_t>> all;
    all.reserve(available);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j)
        if (manifest[i].patient_id != manifest[j].patient_id) all.emplace_back(i, j);
    for (size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<size_t> pick(k, all.size() - 1);
      std::swap(all[k], all[pick(rng)]);
      out.pairs.push_back({manifest[all[k].first].image_id, manifest[all[k].second].image_id, 0});
    }
    return out;
  }

  std::uniform_int_distribution<size_t> pick(0, n - 1);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(count * 2);
  while (out.pairs.size() < count) {
    const size_t a = pick(rng);
    const size_t b = pick(rng);
    if (a == b || manifest[a].patient_id == manifest[b].patient_id) continue;
    if (!seen.insert(unordered_key(a, b)).second) continue;
    out.pairs.push_back({manifest[a].image_id, manifest[b].image_id, 0});
  }
  return out;
}

PairSet build_training_pairs(const Manifest& manifest, const MiningConfig& config, int epoch) {
  if (config.target_size % 2 != 0) throw Error("training set size N_s must be even");
  PairSet positives = mine_positive_pairs(manifest);
  const size_t half = config.target_size == 0 ? positives.size() : config.target_size / 2;
  if (half > positives.size())
    throw Error("N_s/2 = " + std::to_string(half) + " exceeds the " +
                std::to_string(positives.size()) + " available positive pairs");

  if (half < positives.size()) {
    std::mt19937_64 rng(derive_seed(config.seed, {0x706f73}));
    std::shuffle(positives.pairs.begin(), positives.pairs.end(), rng);
    positives.pairs.resize(half);
  }

  const bool fixed = config.mode == MiningMode::kFixed;
  const std::uint64_t epoch_stream = fixed ? 0 : static_cast<std::uint64_t>(epoch) + 1;
  PairSet negatives =
      sample_negative_pairs(manifest, half, derive_seed(config.seed, {0x6e6567, epoch_stream}));

  PairSet out;
  out.balanced = true;
  out.pairs = std::move(positives.pairs);
  out.pairs.insert(out.pairs.end(), negatives.pairs.begin(), negatives.pairs.end());
  std::mt19937_64 rng(derive_seed(config.seed, {0x736875, epoch_stream}));
  std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
  return out;
}

PairSet build_evaluation_pairs(const Manifest& manifest, std::uint64_t seed) {
  PairSet out = mine_positive_pairs(manifest);
  PairSet negatives = sample_negative_pairs(manifest, out.size(), seed);
  out.pairs.insert(out.pairs.end(), negatives.pairs.begin(), negatives.pairs.end());
  out.balanced = true;
  return out;
}

void validate_pair_labels(const PairSet& pairs, const Manifest& manifest) {
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs.pairs[i];
    const ImageRecord* a = manifest.find(p.image_id_1);
    const ImageRecord* b = manifest.find(p.image_id_2);
    if (!a || !b)
      throw SchemaError("pair " + std::to_string(i) + " references unknown image '" +
                        (a ? p.image_id_2 : p.image_id_1) + "'");
    if (p.image_id_1 == p.image_id_2)
      throw SchemaError("pair " + std::to_string(i) + " pairs an image with itself");
    if ((a->patient_id == b->patient_id) != (p.label == 1))
      throw SchemaError("pair " + std::to_string(i) + " (" + p.image_id_1 + ", " + p.image_id_2 +
                        ") has a label inconsistent with its patient ids");
  }
}

std::string serialize_pairs(const PairSet& pairs) {
  std::string out = "image_id_1,image_id_2,label\n";
  for (const auto& p : pairs.pairs)
    out += csv::join({p.image_id_1, p.image_id_2, std::to_string(p.label)}) + "\n";
  return out;
}

PairSet parse_pairs(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0] != csv::Row{"image_id_1", "image_id_2", "label"})
    throw SchemaError("pair CSV must start with header 'image_id_1,image_id_2,label'");
  PairSet out;
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3 || (rows[r][2] != "0" && rows[r][2] != "1"))
      throw SchemaError("malformed pair row " + std::to_string(r));
    out.pairs.push_back({rows[r][0], rows[r][1], rows[r][2] == "1" ? 1 : 0});
  }
  out.balanced = 2 * out.positives() == out.size();
  return out;
}

}  // namespace reidbench
