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

#include <map>
#include <string>
#include <vector>

#include "reidbench/catalog.hpp"

namespace reidbench {

/// Loads and preprocesses manifest images on first use and keeps them.
template <typename Scalar>
class ImageStore {
 public:
  ImageStore(const Manifest& manifest, PreprocessSpec spec)
      : manifest_(&manifest), spec_(spec) {}
  /// Store backed only by put().
  explicit ImageStore(PreprocessSpec spec) : spec_(spec) {}

  const PreprocessSpec& spec() const { return spec_; }

  void put(const std::string& image_id, FeatureMaps<Scalar> image) {
    cache_[image_id] = std::move(image);
  }

  const FeatureMaps<Scalar>& get(const std::string& image_id) {
    auto it = cache_.find(image_id);
    if (it != cache_.end()) return it->second;
    const ImageRecord* rec = manifest_ ? manifest_->find(image_id) : nullptr;
    if (!rec) throw LoadError(image_id, "image id not present in manifest");
    return cache_.emplace(image_id, load_and_preprocess<Scalar>(rec->source_path, spec_))
        .first->second;
  }

  FeatureMaps<Scalar> batch(const std::vector<std::string>& image_ids) {
    std::vector<const FeatureMaps<Scalar>*> parts;
    parts.reserve(image_ids.size());
    for (const auto& id : image_ids) parts.push_back(&get(id));
    return concat_batch<Scalar>(parts);
  }

 private:
  const Manifest* manifest_ = nullptr;
  PreprocessSpec spec_;
  std::map<std::string, FeatureMaps<Scalar>> cache_;
};

}  // namespace reidbench
