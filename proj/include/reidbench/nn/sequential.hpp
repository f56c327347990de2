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

#include <functional>
#include <optional>
#include <string>

#include "reidbench/nn/layers.hpp"

namespace reidbench::nn {

template <typename Scalar>
struct Tape {
  std::vector<LayerCache<Scalar>> caches;
  bool record_outputs = false;
  std::vector<FeatureMaps<Scalar>> outputs;  // filled when record_outputs
};

/// Ordered chain of named layers whose parameters live at fixed offsets of
/// an externally owned flat vector.
template <typename Scalar>
class Sequential {
 public:
  /// Receives (layer position, gradient w.r.t. that layer's output).
  using GradObserver = std::function<void(size_t, const FeatureMaps<Scalar>&)>;

  explicit Sequential(Index base_offset = 0) : base_offset_(base_offset) {}

  void add(std::string name, std::unique_ptr<Layer<Scalar>> layer);

  size_t size() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].name; }
  const Layer<Scalar>& layer(size_t i) const { return *entries_[i].layer; }
  /// Absolute offset of layer i's parameters.
  Index offset(size_t i) const { return entries_[i].offset; }
  std::optional<size_t> find(std::string_view name) const;

  Index base_offset() const { return base_offset_; }
  Index end_offset() const { return next_offset_(); }
  Index parameter_count() const { return end_offset() - base_offset_; }

  Shape output_shape(Shape in) const;
  void initialize(std::span<Scalar> params, std::mt19937_64& rng) const;

  FeatureMaps<Scalar> forward(std::span<const Scalar> params, const FeatureMaps<Scalar>& in,
                              Tape<Scalar>* tape = nullptr) const;
  FeatureMaps<Scalar> backward(std::span<const Scalar> params,
                               const FeatureMaps<Scalar>& grad_out, const Tape<Scalar>& tape,
                               std::span<Scalar> grad,
                               const GradObserver& observer = nullptr) const;

 private:
  struct Entry {
    std::string name;
    std::unique_ptr<Layer<Scalar>> layer;
    Index offset;
  };
  Index next_offset_() const {
    return entries_.empty() ? base_offset_
                            : entries_.back().offset + entries_.back().layer->parameter_count();
  }

  Index base_offset_;
  std::vector<Entry> entries_;
};

}  // namespace reidbench::nn
