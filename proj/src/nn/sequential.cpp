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

#include "reidbench/nn/sequential.hpp"

namespace reidbench::nn {

template <typename Scalar>
void Sequential<Scalar>::add(std::string name, std::unique_ptr<Layer<Scalar>> layer) {
  const Index offset = next_offset_();
  entries_.push_back({std::move(name), std::move(layer), offset});
}

template <typename Scalar>
std::optional<size_t> Sequential<Scalar>::find(std::string_view name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

template <typename Scalar>
Shape Sequential<Scalar>::output_shape(Shape in) const {
  for (const auto& e : entries_) in = e.layer->output_shape(in);
  return in;
}

template <typename Scalar>
void Sequential<Scalar>::initialize(std::span<Scalar> params, std::mt19937_64& rng) const {
  for (const auto& e : entries_) {
    e.layer->initialize(params.subspan(static_cast<size_t>(e.offset),
                                       static_cast<size_t>(e.layer->parameter_count())),
                        rng);
  }
}

template <typename Scalar>
FeatureMaps<Scalar> Sequential<Scalar>::forward(std::span<const Scalar> params,
                                                const FeatureMaps<Scalar>& in,
                                                Tape<Scalar>* tape) const {
  if (tape) {
    tape->caches.assign(entries_.size(), {});
    tape->outputs.clear();
  }
  FeatureMaps<Scalar> x = in;
  for (size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    auto slice = params.subspan(static_cast<size_t>(e.offset),
                                static_cast<size_t>(e.layer->parameter_count()));
    x = e.layer->forward(slice, x, tape ? &tape->caches[i] : nullptr);
    if (tape && tape->record_outputs) tape->outputs.push_back(x);
  }
  return x;
}

template <typename Scalar>
FeatureMaps<Scalar> Sequential<Scalar>::backward(std::span<const Scalar> params,
                                                 const FeatureMaps<Scalar>& grad_out,
                                                 const Tape<Scalar>& tape,
                                                 std::span<Scalar> grad,
                                                 const GradObserver& observer) const {
  if (tape.caches.size() != entries_.size())
    throw Error("backward called without a matching training forward pass");
  FeatureMaps<Scalar> g = grad_out;
  for (size_t i = entries_.size(); i-- > 0;) {
    if (observer) observer(i, g);
    const auto& e = entries_[i];
    const auto n = static_cast<size_t>(e.layer->parameter_count());
    const auto off = static_cast<size_t>(e.offset);
    g = e.layer->backward(params.subspan(off, n), g, tape.caches[i], grad.subspan(off, n));
  }
  return g;
}

template class Sequential<float>;
template class Sequential<double>;

}  // namespace reidbench::nn
