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

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "reidbench/config.hpp"

namespace reidbench {

inline constexpr const char* kVersion = "0.1.0";

/// Seed streams combined with run.seed by derive_seed.
enum class SeedStream : std::uint64_t {
  kSplit = 1,
  kSynth,
  kInit,
  kMining,
  kShuffle,
  kEvalPairs,
  kBootstrap,
};

std::uint64_t effective_seed(const RunConfig& config, SeedStream stream);

/// Runs the configured task inside config.out_dir. Writes the resolved
/// config first and run.json last. On failure, artifacts written so far
/// are kept and a FAILED file holds the message. Returns 0 or 1.
int run_task(const RunConfig& config, std::ostream& log);

/// Expands a base config over the cartesian product of `grid` values
/// (key -> values). Each variant's run.out is <out_dir>/run_<n>. Returns
/// (file name, config text) in grid order.
std::vector<std::pair<std::string, std::string>> expand_sweep(
    std::string_view base_text,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
    const std::filesystem::path& out_dir);

}  // namespace reidbench
