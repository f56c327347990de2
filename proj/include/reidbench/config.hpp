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
#include <optional>
#include <string>
#include <vector>

#include "reidbench/catalog.hpp"
#include "reidbench/synthetic.hpp"
#include "reidbench/training.hpp"

namespace reidbench {

enum class Task {
  kSplit,
  kMine,
  kSynth,
  kTrainVerif,
  kTrainReid,
  kEvalVerif,
  kEvalReid,
  kAttack,
  kExplain,
};

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);
std::vector<std::string> task_names();

struct DataConfig {
  std::filesystem::path manifest;
  std::filesystem::path image_root;  // empty: relative to the manifest
  std::filesystem::path split_file;  // empty: split from fractions
  std::filesystem::path pairs;       // pair CSV for eval-verif / explain
  std::array<double, 3> split_fractions{0.7, 0.1, 0.2};
  Split eval_split = Split::kTest;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ModelConfig {
  std::string trunk = "toy";
  std::filesystem::path checkpoint;
  Index verif_resolution = 256;
  Index verif_pool = 1;
  Index reid_resolution = 1024;
  Index reid_pool = 5;
  Index reduce_channels = 100;
  Index hidden = 256;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EvalConfig {
  double threshold = 0.5;
  size_t n_boot = 10000;
  double alpha = 0.05;
  std::vector<Index> resolutions{1024, 512, 256, 224};
  bool exclude_self = true;
  std::vector<size_t> k_list{1, 5, 10};
  size_t top_k = 10;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct AttackConfig {
  std::filesystem::path queries;  // manifest; empty: eval split of data.manifest
  std::filesystem::path gallery;  // manifest; empty: same as queries
  std::filesystem::path index;    // prebuilt gallery index (skips embedding)
  std::filesystem::path verification_checkpoint;  // optional verification sweep
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct ExplainConfig {
  std::string layer = "conv1";
  size_t count = 4;
  friend bool operator==(const ExplainConfig&, const ExplainConfig&) = default;
};

/// Component seeds. The generator actually used by each component is
/// derive_seed(run seed, {component, value}), so changing run.seed alone
/// re-seeds everything.
struct SeedConfig {
  std::uint64_t split = 0;
  std::uint64_t synth = 0;
  std::uint64_t init = 0;
  std::uint64_t mining = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t eval_pairs = 0;
  std::uint64_t bootstrap = 0;
  friend bool operator==(const SeedConfig&, const SeedConfig&) = default;
};

struct RunConfig {
  Task task = Task::kSynth;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/latest";
  DataConfig data;
  SyntheticSpec synth;
  ModelConfig model;
  VerifTrainConfig verif;
  ReidTrainConfig reid;
  EvalConfig eval;
  AttackConfig attack;
  ExplainConfig explain;
  SeedConfig seeds;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;  // every problem found, in key order
  bool ok() const { return config.has_value(); }
};

/// Parses sectioned key = value text. Unknown keys, malformed values and
/// constraint violations are all reported. `task` (from the command line)
/// fills run.task; a conflicting run.task is an error.
ConfigResult validate_config(std::string_view text, std::optional<Task> task = std::nullopt);

/// Every key with its resolved value; validate_config inverts it.
std::string serialize_config(const RunConfig& config);

/// Markdown table of keys, defaults and descriptions.
std::string config_reference();

/// All valid "section.key" names.
std::vector<std::string> config_keys();

/// Applies "section.key=value" overrides on top of `text` (used by sweeps).
std::string apply_overrides(std::string_view text,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace reidbench
