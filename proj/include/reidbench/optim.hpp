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

#include <cmath>

#include "reidbench/nn/feature_maps.hpp"

namespace reidbench {

/// Piecewise-linear 1cycle: lo -> hi over steps [0, total/2], then hi -> lo
/// over the remaining steps. Throws if step is outside [0, total_steps).
double one_cycle_lr(long long step, long long total_steps, double lo, double hi);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(Index size, AdamOptions options)
      : options_(options), m_(VectorX<Scalar>::Zero(size)), v_(VectorX<Scalar>::Zero(size)) {}

  void step(VectorX<Scalar>& params, const VectorX<Scalar>& grad) {
    ++t_;
    const auto b1 = static_cast<Scalar>(options_.beta1);
    const auto b2 = static_cast<Scalar>(options_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const auto c1 = Scalar(1) - static_cast<Scalar>(std::pow(options_.beta1, double(t_)));
    const auto c2 = Scalar(1) - static_cast<Scalar>(std::pow(options_.beta2, double(t_)));
    const auto lr = static_cast<Scalar>(options_.learning_rate);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

  long long steps() const { return t_; }

 private:
  AdamOptions options_;
  VectorX<Scalar> m_, v_;
  long long t_ = 0;
};

/// SGD with L2 weight decay and optional momentum, restricted to the
/// trainable parameter range [begin, end).
template <typename Scalar>
class Sgd {
 public:
  Sgd(Index size, double weight_decay, double momentum)
      : weight_decay_(weight_decay), momentum_(momentum), velocity_(VectorX<Scalar>::Zero(size)) {}

  void step(VectorX<Scalar>& params, const VectorX<Scalar>& grad, double learning_rate,
            Index begin, Index end) {
    const Index n = end - begin;
    auto p = params.segment(begin, n);
    auto v = velocity_.segment(begin, n);
    const VectorX<Scalar> g =
        grad.segment(begin, n) + static_cast<Scalar>(weight_decay_) * VectorX<Scalar>(p);
    if (momentum_ > 0)
      v = static_cast<Scalar>(momentum_) * v + g;
    else
      v = g;
    p -= static_cast<Scalar>(learning_rate) * v;
  }

 private:
  double weight_decay_;
  double momentum_;
  VectorX<Scalar> velocity_;
};

}  // namespace reidbench
