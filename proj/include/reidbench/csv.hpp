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
#include <string_view>
#include <vector>

namespace reidbench::csv {

using Row = std::vector<std::string>;

/// Parses comma-separated text with optional double-quoted fields ("" escapes
/// a quote inside a quoted field). Accepts LF or CRLF line endings; blank
/// lines are skipped.
std::vector<Row> parse(std::string_view text);

/// Quotes the field if it contains a comma, quote, or line break.
std::string escape(std::string_view field);

std::string join(const Row& row);

}  // namespace reidbench::csv
