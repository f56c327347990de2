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

#include "reidbench/models.hpp"

#include <cmath>
#include <random>

#include "reidbench/losses.hpp"

namespace reidbench {
namespace {

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

template <typename Scalar>
std::span<const Scalar> as_span(const VectorX<Scalar>& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

template <typename Scalar>
std::span<Scalar> as_span(VectorX<Scalar>& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

template <typename Scalar>
void check_three_channel_square(const FeatureMaps<Scalar>& x, Index expected_resolution) {
  const Shape& s = x.shape;
  const bool ok = s.channels == 3 && s.height == s.width &&
                  (expected_resolution <= 0 || s.height == expected_resolution);
  if (!ok) {
    std::string expected = expected_resolution > 0
                               ? "Bx3x" + std::to_string(expected_resolution) + "x" +
                                     std::to_string(expected_resolution)
                               : std::string("Bx3xRxR");
    throw ShapeError("expected input of shape " + expected + ", got " + to_string(s));
  }
}

}  // namespace

TrunkSpec registered_trunk(std::string_view name) {
  if (name == "micro") return {"micro", {{4, 3, 2, 1}, {6, 3, 2, 1}}};
  if (name == "single") return {"single", {{4, 1, 1, 0}}};
  if (name == "toy") return {"toy", {{16, 3, 1, 1}, {32, 3, 2, 1}, {32, 3, 2, 1}}};
  if (name == "small")
    return {"small", {{32, 3, 2, 1}, {64, 3, 2, 1}, {128, 3, 2, 1}, {256, 3, 2, 1}}};
  std::string valid;
  for (const auto& n : registered_trunk_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown trunk '" + std::string(name) + "' (valid: " + valid + ")");
}

std::vector<std::string> registered_trunk_names() { return {"micro", "single", "toy", "small"}; }

namespace detail {

template <typename Scalar>
void add_trunk(nn::Sequential<Scalar>& seq, const TrunkSpec& trunk) {
  if (trunk.blocks.empty()) throw ConfigError("trunk '" + trunk.name + "' has no blocks");
  Index channels = 3;
  for (size_t i = 0; i < trunk.blocks.size(); ++i) {
    const ConvBlock& b = trunk.blocks[i];
    const std::string id = std::to_string(i + 1);
    seq.add("conv" + id,
            std::make_unique<nn::Conv2d<Scalar>>(channels, b.channels, b.kernel, b.stride,
                                                 b.padding));
    seq.add("relu" + id, std::make_unique<nn::Relu<Scalar>>());
    channels = b.channels;
  }
}

}  // namespace detail

// ---------------------------------------------------------------- VerificationNet

template <typename Scalar>
VerificationNet<Scalar>::VerificationNet(VerificationNetSpec spec) : spec_(std::move(spec)) {
  if (spec_.pool <= 0 || spec_.resolution <= 0)
    throw ConfigError("verification net needs positive pool and resolution");
  detail::add_trunk(encoder_, spec_.trunk);
  trunk_end_ = encoder_.end_offset();
  const Shape trunk_out = encoder_.output_shape({1, 3, spec_.resolution, spec_.resolution});
  encoder_.add("pool", std::make_unique<nn::AdaptivePool<Scalar>>(nn::PoolMode::kAverage,
                                                                  spec_.pool, spec_.pool));
  encoder_.add("flatten", std::make_unique<nn::Flatten<Scalar>>());
  encoder_.add("fc", std::make_unique<nn::Linear<Scalar>>(
                         trunk_out.channels * spec_.pool * spec_.pool, kEmbeddingDim));
  params_ = VectorX<Scalar>::Zero(encoder_.end_offset() + kEmbeddingDim + 1);
}

template <typename Scalar>
void VerificationNet<Scalar>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  encoder_.initialize(as_span(params_), rng);
  const Index head = encoder_.end_offset();
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(kEmbeddingDim)));
  for (Index i = 0; i < kEmbeddingDim; ++i) params_[head + i] = static_cast<Scalar>(normal(rng));
  params_[head + kEmbeddingDim] = Scalar(0);
}

template <typename Scalar>
void VerificationNet<Scalar>::check_input(const FeatureMaps<Scalar>& x) const {
  check_three_channel_square(x, spec_.resolution);
}

template <typename Scalar>
MatrixX<Scalar> VerificationNet<Scalar>::encode(const FeatureMaps<Scalar>& x) const {
  check_input(x);
  return encoder_.forward(as_span(params_), x).data;
}

template <typename Scalar>
RowVectorX<Scalar> VerificationNet<Scalar>::score(const MatrixX<Scalar>& z1,
                                                  const MatrixX<Scalar>& z2) const {
  if (z1.rows() != kEmbeddingDim || z2.rows() != kEmbeddingDim || z1.cols() != z2.cols())
    throw ShapeError("score expects two 128xB encodings of equal batch");
  const Index head = encoder_.end_offset();
  Eigen::Map<const VectorX<Scalar>> w(params_.data() + head, kEmbeddingDim);
  const Scalar b = params_[head + kEmbeddingDim];
  const MatrixX<Scalar> merged = (sigmoid(z1) - sigmoid(z2)).cwiseAbs();
  RowVectorX<Scalar> logits = w.transpose() * merged;
  logits.array() += b;
  return sigmoid(logits);
}

template <typename Scalar>
Scalar VerificationNet<Scalar>::forward(const FeatureMaps<Scalar>& x1,
                                        const FeatureMaps<Scalar>& x2) const {
  if (x1.shape.batch != 1 || x2.shape.batch != 1)
    throw ShapeError("forward scores a single pair; got batches " + to_string(x1.shape) +
                     " and " + to_string(x2.shape));
  // Each branch is encoded on its own so the result cannot depend on
  // argument order.
  return score(encode(x1), encode(x2))(0);
}

template <typename Scalar>
RowVectorX<Scalar> VerificationNet<Scalar>::score_gradient_wrt_encodings(
    const MatrixX<Scalar>& z1, const MatrixX<Scalar>& z2, MatrixX<Scalar>& dz1,
    MatrixX<Scalar>& dz2) const {
  const Index head = encoder_.end_offset();
  Eigen::Map<const VectorX<Scalar>> w(params_.data() + head, kEmbeddingDim);
  const RowVectorX<Scalar> y = score(z1, z2);
  const MatrixX<Scalar> s1 = sigmoid(z1), s2 = sigmoid(z2);
  const MatrixX<Scalar> sign = (s1 - s2).array().sign().matrix();
  const RowVectorX<Scalar> dlogit = (y.array() * (Scalar(1) - y.array())).matrix();
  const MatrixX<Scalar> dmerged = w * dlogit;
  const MatrixX<Scalar> ds1 = sign.cwiseProduct(dmerged);
  dz1 = ds1.cwiseProduct((s1.array() * (Scalar(1) - s1.array())).matrix());
  dz2 = -ds1.cwiseProduct((s2.array() * (Scalar(1) - s2.array())).matrix());
  return y;
}

template <typename Scalar>
Scalar VerificationNet<Scalar>::bce_loss_and_gradient(const FeatureMaps<Scalar>& x1,
                                                      const FeatureMaps<Scalar>& x2,
                                                      std::span<const int> labels,
                                                      VectorX<Scalar>& grad) const {
  check_input(x1);
  check_input(x2);
  const Index batch = x1.shape.batch;
  if (x2.shape.batch != batch || static_cast<Index>(labels.size()) != batch)
    throw ShapeError("pair batch sizes disagree");
  if (grad.size() != params_.size()) grad = VectorX<Scalar>::Zero(params_.size());

  nn::Tape<Scalar> tape;
  const MatrixX<Scalar> z = encoder_.forward(as_span(params_), concat_batch(x1, x2), &tape).data;
  const auto z1 = z.leftCols(batch);
  const auto z2 = z.rightCols(batch);

  const Index head = encoder_.end_offset();
  Eigen::Map<const VectorX<Scalar>> w(params_.data() + head, kEmbeddingDim);
  const MatrixX<Scalar> s1 = sigmoid(z1), s2 = sigmoid(z2);
  const MatrixX<Scalar> diff = s1 - s2;
  const MatrixX<Scalar> merged = diff.cwiseAbs();
  RowVectorX<Scalar> logits = w.transpose() * merged;
  logits.array() += params_[head + kEmbeddingDim];
  const RowVectorX<Scalar> pred = sigmoid(logits);

  Scalar loss = 0;
  RowVectorX<Scalar> dlogit(batch);
  for (Index i = 0; i < batch; ++i) {
    loss += bce_loss(pred(i), labels[static_cast<size_t>(i)]);
    dlogit(i) = (pred(i) - Scalar(labels[static_cast<size_t>(i)])) / Scalar(batch);
  }
  loss /= Scalar(batch);

  grad.segment(head, kEmbeddingDim) += merged * dlogit.transpose();
  grad[head + kEmbeddingDim] += dlogit.sum();

  const MatrixX<Scalar> dmerged = w * dlogit;
  const MatrixX<Scalar> ds1 = diff.array().sign().matrix().cwiseProduct(dmerged);
  MatrixX<Scalar> dz(kEmbeddingDim, 2 * batch);
  dz.leftCols(batch) = ds1.cwiseProduct((s1.array() * (Scalar(1) - s1.array())).matrix());
  dz.rightCols(batch) = -ds1.cwiseProduct((s2.array() * (Scalar(1) - s2.array())).matrix());

  encoder_.backward(as_span(params_), FeatureMaps<Scalar>({2 * batch, kEmbeddingDim, 1, 1}, dz),
                    tape, as_span(grad));
  return loss;
}

// ---------------------------------------------------------------- EmbeddingNet

template <typename Scalar>
EmbeddingNet<Scalar>::EmbeddingNet(EmbeddingNetSpec spec) : spec_(std::move(spec)) {
  if (spec_.pool <= 0 || spec_.reduce_channels <= 0 || spec_.hidden <= 0)
    throw ConfigError("embedding net needs positive pool, reduce_channels and hidden");
  detail::add_trunk(encoder_, spec_.trunk);
  trunk_end_ = encoder_.end_offset();
  const Index trunk_channels = spec_.trunk.blocks.back().channels;
  encoder_.add("pool", std::make_unique<nn::AdaptivePool<Scalar>>(nn::PoolMode::kConcat,
                                                                  spec_.pool, spec_.pool));
  encoder_.add("reduce", std::make_unique<nn::Conv2d<Scalar>>(2 * trunk_channels,
                                                              spec_.reduce_channels, 1, 1, 0));
  encoder_.add("flatten", std::make_unique<nn::Flatten<Scalar>>());
  encoder_.add("fc1", std::make_unique<nn::Linear<Scalar>>(
                          spec_.reduce_channels * spec_.pool * spec_.pool, spec_.hidden));
  encoder_.add("relu_fc", std::make_unique<nn::Relu<Scalar>>());
  encoder_.add("fc2", std::make_unique<nn::Linear<Scalar>>(spec_.hidden, kEmbeddingDim));
  params_ = VectorX<Scalar>::Zero(encoder_.end_offset());
}

template <typename Scalar>
void EmbeddingNet<Scalar>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  encoder_.initialize(as_span(params_), rng);
}

template <typename Scalar>
void EmbeddingNet<Scalar>::check_input(const FeatureMaps<Scalar>& x) const {
  check_three_channel_square(x, 0);
}

template <typename Scalar>
MatrixX<Scalar> EmbeddingNet<Scalar>::embed_batch(const FeatureMaps<Scalar>& x) const {
  check_input(x);
  return encoder_.forward(as_span(params_), x).data;
}

template <typename Scalar>
Embedding<Scalar> EmbeddingNet<Scalar>::embed(const FeatureMaps<Scalar>& x) const {
  if (x.shape.batch != 1) throw ShapeError("embed expects a single image, got " + to_string(x.shape));
  return embed_batch(x).col(0);
}

template <typename Scalar>
MatrixX<Scalar> EmbeddingNet<Scalar>::forward(const FeatureMaps<Scalar>& x,
                                              nn::Tape<Scalar>& tape) const {
  check_input(x);
  return encoder_.forward(as_span(params_), x, &tape).data;
}

template <typename Scalar>
void EmbeddingNet<Scalar>::backward(const nn::Tape<Scalar>& tape,
                                    const MatrixX<Scalar>& grad_embeddings,
                                    VectorX<Scalar>& grad) const {
  if (grad.size() != params_.size()) grad = VectorX<Scalar>::Zero(params_.size());
  encoder_.backward(as_span(params_),
                    FeatureMaps<Scalar>({grad_embeddings.cols(), kEmbeddingDim, 1, 1},
                                        grad_embeddings),
                    tape, as_span(grad));
}

template void detail::add_trunk<float>(nn::Sequential<float>&, const TrunkSpec&);
template void detail::add_trunk<double>(nn::Sequential<double>&, const TrunkSpec&);
template class VerificationNet<float>;
template class VerificationNet<double>;
template class EmbeddingNet<float>;
template class EmbeddingNet<double>;

}  // namespace reidbench
