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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reidbench/attack.hpp"
#include "reidbench/image_store.hpp"
#include "reidbench/metrics.hpp"
#include "reidbench/mining.hpp"
#include "reidbench/models.hpp"
#include "reidbench/optim.hpp"

namespace reidbench {

/// True iff none of the last `patience` values improves (strictly
/// decreases) on the best value before them. Lower is better.
bool early_stop_check(std::span<const double> history, size_t patience);

/// Tracks the best value and epochs since improvement. Lower is better.
class EarlyStopping {
 public:
  explicit EarlyStopping(size_t patience);

  /// Records one epoch's value; returns true when training should stop.
  bool observe(double value);
  bool improved_last() const { return improved_last_; }
  double best() const { return best_; }
  size_t best_epoch() const { return best_epoch_; }  // 1-based
  size_t epochs_since_improvement() const { return since_; }
  const std::vector<double>& history() const { return history_; }

 private:
  size_t patience_;
  std::vector<double> history_;
  double best_ = 0;
  size_t best_epoch_ = 0;
  size_t since_ = 0;
  bool improved_last_ = false;
};

enum class MonitorMetric { kLoss, kAuc };

struct VerifTrainConfig {
  double learning_rate = 1e-4;
  size_t batch_size = 32;
  size_t patience = 5;
  size_t max_epochs = 100;
  MiningConfig mining;
  MonitorMetric monitor = MonitorMetric::kLoss;
  std::uint64_t seed = 0;
};

struct ReidTrainConfig {
  double lr_lower = 0.0063;
  double lr_upper = 0.1584;
  double weight_decay = 1e-5;
  double margin = 1.0;
  double momentum = 0.0;
  size_t phase1_epochs = 30;  // head only
  size_t phase2_epochs = 50;  // full network
  size_t batch_size = 32;
  size_t memory_capacity = 128;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  size_t epoch = 0;  // 1-based, counted across phases
  double train_loss = 0;
  double val_loss = 0;
  double val_metric = 0;
  double lr = 0;  // last learning rate used in the epoch
};

struct TrainState {
  size_t epoch = 0;
  long long global_step = 0;
  double best_val_metric = 0;
  size_t best_epoch = 0;
  size_t epochs_since_improvement = 0;
  bool early_stopped = false;
  std::vector<EpochRecord> history;
  std::vector<double> lr_trace;  // one entry per optimizer step
};

/// `epoch,train_loss,val_loss,val_metric,lr`
std::string history_csv(const TrainState& state);

/// Thrown when a loss becomes non-finite; carries the state at that point.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainState state)
      : Error(what), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

/// Called after every epoch with the current parameters and whether they
/// are the best so far.
template <typename Scalar>
using EpochCallback =
    std::function<void(const TrainState&, const VectorX<Scalar>& params, bool is_best)>;

/// Scores each pair with the verification model. Every distinct image is
/// encoded once.
template <typename Scalar>
std::vector<double> score_pairs(const VerificationNet<Scalar>& model, const PairSet& pairs,
                                ImageStore<Scalar>& images, size_t batch_size = 64);

/// Adam on mean BCE with early stopping; leaves the best-epoch parameters
/// in `model`.
template <typename Scalar>
TrainState train_verification(const VerifTrainConfig& config, const Manifest& train,
                              const Manifest& val, VerificationNet<Scalar>& model,
                              ImageStore<Scalar>& images,
                              const EpochCallback<Scalar>& on_epoch = nullptr);

/// Two 1cycle phases of SGD on the contrastive loss with cross-batch
/// memory: head only, then the full network. Single-image patients are
/// dropped from `train`. Leaves the final parameters in `model`.
template <typename Scalar>
TrainState train_reid(const ReidTrainConfig& config, const Manifest& train, const Manifest& val,
                      EmbeddingNet<Scalar>& model, ImageStore<Scalar>& images,
                      const EpochCallback<Scalar>& on_epoch = nullptr);

/// Mean contrastive loss over mined pairs and its gradient w.r.t. the
/// batch embeddings (memory entries are constants).
template <typename Scalar>
Scalar contrastive_batch_loss(const MatrixX<Scalar>& batch_embeddings,
                              const std::vector<std::string>& batch_patients,
                              const CrossBatchMemory<Scalar>& memory, Scalar margin,
                              MatrixX<Scalar>& grad_embeddings);

/// Embeds every manifest image into an index (model id left empty).
template <typename Scalar>
GalleryIndex embed_images(const EmbeddingNet<Scalar>& model, const Manifest& manifest,
                          ImageStore<Scalar>& images, size_t batch_size = 64);

/// Drops patients with fewer than two images.
Manifest drop_single_image_patients(const Manifest& manifest);

}  // namespace reidbench
