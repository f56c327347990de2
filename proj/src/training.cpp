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

#include "reidbench/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "reidbench/attack.hpp"
#include "reidbench/format.hpp"
#include "reidbench/losses.hpp"
#include "reidbench/random.hpp"

namespace reidbench {

double one_cycle_lr(long long step, long long total_steps, double lo, double hi) {
  if (total_steps <= 0 || step < 0 || step >= total_steps)
    throw Error("one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
                std::to_string(total_steps) + ")");
  if (total_steps == 1) return lo;
  const long long peak = total_steps / 2;
  if (step == 0) return lo;
  if (step == peak) return hi;
  if (step < peak) return lo + (hi - lo) * static_cast<double>(step) / static_cast<double>(peak);
  return hi - (hi - lo) * static_cast<double>(step - peak) / static_cast<double>(total_steps - peak);
}

bool early_stop_check(std::span<const double> history, size_t patience) {
  if (patience == 0) throw Error("patience must be at least 1");
  if (history.size() <= patience) return false;
  const auto split = history.end() - static_cast<std::ptrdiff_t>(patience);
  const double best_before = *std::min_element(history.begin(), split);
  return std::all_of(split, history.end(), [&](double v) { return !(v < best_before); });
}

EarlyStopping::EarlyStopping(size_t patience) : patience_(patience) {
  if (patience == 0) throw Error("patience must be at least 1");
}

bool EarlyStopping::observe(double value) {
  history_.push_back(value);
  improved_last_ = history_.size() == 1 || value < best_;
  if (improved_last_) {
    best_ = value;
    best_epoch_ = history_.size();
    since_ = 0;
  } else {
    ++since_;
  }
  return early_stop_check(history_, patience_);
}

std::string history_csv(const TrainState& state) {
  std::string out = "epoch,train_loss,val_loss,val_metric,lr\n";
  for (const auto& r : state.history)
    out += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' +
           format_double(r.val_loss) + ',' + format_double(r.val_metric) + ',' +
           format_double(r.lr) + '\n';
  return out;
}

Manifest drop_single_image_patients(const Manifest& manifest) {
  return filter_manifest(manifest, [&](const ImageRecord& r) {
    return manifest.patient_index().at(r.patient_id).size() >= 2;
  });
}

template <typename Scalar>
std::vector<double> score_pairs(const VerificationNet<Scalar>& model, const PairSet& pairs,
                                ImageStore<Scalar>& images, size_t batch_size) {
  std::vector<std::string> unique;
  std::unordered_map<std::string, Index> column;
  for (const auto& p : pairs.pairs)
    for (const auto* id : {&p.image_id_1, &p.image_id_2})
      if (column.emplace(*id, static_cast<Index>(unique.size())).second) unique.push_back(*id);

  MatrixX<Scalar> z(kEmbeddingDim, static_cast<Index>(unique.size()));
  for (size_t begin = 0; begin < unique.size(); begin += batch_size) {
    const size_t end = std::min(unique.size(), begin + batch_size);
    const std::vector<std::string> ids(unique.begin() + std::ptrdiff_t(begin),
                                       unique.begin() + std::ptrdiff_t(end));
    z.middleCols(static_cast<Index>(begin), static_cast<Index>(end - begin)) =
        model.encode(images.batch(ids));
  }
  MatrixX<Scalar> z1(kEmbeddingDim, static_cast<Index>(pairs.size()));
  MatrixX<Scalar> z2(kEmbeddingDim, static_cast<Index>(pairs.size()));
  for (size_t i = 0; i < pairs.size(); ++i) {
    z1.col(Index(i)) = z.col(column.at(pairs.pairs[i].image_id_1));
    z2.col(Index(i)) = z.col(column.at(pairs.pairs[i].image_id_2));
  }
  const RowVectorX<Scalar> s = model.score(z1, z2);
  std::vector<double> out(pairs.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(s(Index(i)));
  return out;
}

template <typename Scalar>
TrainState train_verification(const VerifTrainConfig& config, const Manifest& train,
                              const Manifest& val, VerificationNet<Scalar>& model,
                              ImageStore<Scalar>& images, const EpochCallback<Scalar>& on_epoch) {
  if (config.batch_size < 2) throw ConfigError("verification batch size must be at least 2");
  const PairSet val_pairs = build_evaluation_pairs(val, derive_seed(config.seed, {0x76616c}));
  if (val_pairs.positives() == 0 || val_pairs.positives() == val_pairs.size())
    throw Error("validation split must yield positive and negative pairs");
  std::vector<int> val_labels;
  for (const auto& p : val_pairs.pairs) val_labels.push_back(p.label);

  Adam<Scalar> adam(model.parameter_count(), AdamOptions{config.learning_rate});
  EarlyStopping stopper(config.patience);
  VectorX<Scalar> best_params = model.parameters();
  VectorX<Scalar> grad(model.parameter_count());
  TrainState state;

  for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    PairSet pairs = build_training_pairs(train, config.mining, static_cast<int>(epoch));
    std::mt19937_64 rng(derive_seed(config.seed, {0x657063, epoch}));
    std::shuffle(pairs.pairs.begin(), pairs.pairs.end(), rng);

    double loss_sum = 0;
    size_t seen = 0;
    for (size_t begin = 0; begin < pairs.size(); begin += config.batch_size) {
      const size_t end = std::min(pairs.size(), begin + config.batch_size);
      std::vector<std::string> ids1, ids2;
      std::vector<int> labels;
      for (size_t i = begin; i < end; ++i) {
        ids1.push_back(pairs.pairs[i].image_id_1);
        ids2.push_back(pairs.pairs[i].image_id_2);
        labels.push_back(pairs.pairs[i].label);
      }
      grad.setZero();
      const Scalar loss =
          model.bce_loss_and_gradient(images.batch(ids1), images.batch(ids2), labels, grad);
      if (!std::isfinite(static_cast<double>(loss)) || !grad.allFinite()) {
        state.epoch = epoch;
        throw TrainingDiverged("non-finite training loss at step " +
                                   std::to_string(state.global_step),
                               state);
      }
      adam.step(model.parameters(), grad);
      ++state.global_step;
      state.lr_trace.push_back(config.learning_rate);
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - begin);
      seen += end - begin;
    }

    const std::vector<double> scores = score_pairs(model, val_pairs, images);
    const double val_loss = bce_loss<double>(scores, val_labels);
    std::vector<ScoredPair> scored;
    for (size_t i = 0; i < scores.size(); ++i) scored.push_back({scores[i], val_labels[i], {}});
    const double val_auc = auc(scored);
    if (!std::isfinite(val_loss)) {
      state.epoch = epoch;
      throw TrainingDiverged("non-finite validation loss", state);
    }

    const bool stop =
        stopper.observe(config.monitor == MonitorMetric::kLoss ? val_loss : -val_auc);
    state.epoch = epoch;
    state.history.push_back({epoch, seen ? loss_sum / double(seen) : 0.0, val_loss, val_auc,
                             config.learning_rate});
    state.epochs_since_improvement = stopper.epochs_since_improvement();
    state.best_epoch = stopper.best_epoch();
    state.best_val_metric =
        config.monitor == MonitorMetric::kLoss ? stopper.best() : -stopper.best();
    if (stopper.improved_last()) best_params = model.parameters();
    if (on_epoch) on_epoch(state, model.parameters(), stopper.improved_last());
    if (stop) {
      state.early_stopped = true;
      break;
    }
  }
  model.parameters() = best_params;
  return state;
}

template <typename Scalar>
Scalar contrastive_batch_loss(const MatrixX<Scalar>& batch_embeddings,
                              const std::vector<std::string>& batch_patients,
                              const CrossBatchMemory<Scalar>& memory, Scalar margin,
                              MatrixX<Scalar>& grad_embeddings) {
  grad_embeddings = MatrixX<Scalar>::Zero(batch_embeddings.rows(), batch_embeddings.cols());
  const std::vector<MinedPair> pairs = enumerate_batch_pairs(batch_patients, memory);
  if (pairs.empty()) return Scalar(0);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(pairs.size());
  Scalar loss = 0;
  for (const MinedPair& p : pairs) {
    const Embedding<Scalar> other = p.in_memory ? memory[static_cast<size_t>(p.second)].embedding
                                                : Embedding<Scalar>(batch_embeddings.col(p.second));
    const Embedding<Scalar> diff = batch_embeddings.col(p.first) - other;
    const Scalar d = diff.norm();
    loss += contrastive_loss(d, p.label, margin);
    if (d <= Scalar(0)) continue;
    const Embedding<Scalar> g = scale * contrastive_loss_derivative(d, p.label, margin) / d * diff;
    grad_embeddings.col(p.first) += g;
    if (!p.in_memory) grad_embeddings.col(p.second) -= g;
  }
  return loss * scale;
}

template <typename Scalar>
GalleryIndex embed_images(const EmbeddingNet<Scalar>& model, const Manifest& manifest,
                          ImageStore<Scalar>& images, size_t batch_size) {
  GalleryIndex index;
  index.resolution = images.spec().resolution;
  for (size_t begin = 0; begin < manifest.size(); begin += batch_size) {
    const size_t end = std::min(manifest.size(), begin + batch_size);
    std::vector<std::string> ids;
    for (size_t i = begin; i < end; ++i) ids.push_back(manifest[i].image_id);
    const MatrixX<Scalar> e = model.embed_batch(images.batch(ids));
    for (size_t i = begin; i < end; ++i)
      index.add(manifest[i].image_id, manifest[i].patient_id,
                e.col(Index(i - begin)).template cast<float>());
  }
  return index;
}

template <typename Scalar>
TrainState train_reid(const ReidTrainConfig& config, const Manifest& train, const Manifest& val,
                      EmbeddingNet<Scalar>& model, ImageStore<Scalar>& images,
                      const EpochCallback<Scalar>& on_epoch) {
  if (!(config.lr_lower < config.lr_upper)) throw ConfigError("reid lr_lower must be < lr_upper");
  if (!(config.margin > 0)) throw ConfigError("contrastive margin must be positive");
  if (config.batch_size == 0) throw ConfigError("reid batch size must be positive");
  const Manifest data = drop_single_image_patients(train);
  if (data.empty()) throw Error("no training patients with two or more images");

  CrossBatchMemory<Scalar> memory(config.memory_capacity);
  Sgd<Scalar> sgd(model.parameter_count(), config.weight_decay, config.momentum);
  VectorX<Scalar> grad(model.parameter_count());
  TrainState state;
  const size_t steps_per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;

  std::vector<size_t> order(data.size());
  for (int phase = 1; phase <= 2; ++phase) {
    const size_t epochs = phase == 1 ? config.phase1_epochs : config.phase2_epochs;
    if (epochs == 0) continue;
    const long long total = static_cast<long long>(epochs * steps_per_epoch);
    const Index begin = phase == 1 ? model.trunk_parameter_count() : 0;
    const Index end = model.parameter_count();
    memory.clear();
    long long step = 0;

    for (size_t e = 1; e <= epochs; ++e) {
      std::iota(order.begin(), order.end(), size_t(0));
      std::mt19937_64 rng(derive_seed(config.seed, {0x726964, std::uint64_t(phase), e}));
      std::shuffle(order.begin(), order.end(), rng);

      double loss_sum = 0, lr = 0;
      for (size_t b = 0; b < order.size(); b += config.batch_size) {
        std::vector<std::string> ids, patients;
        for (size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
          ids.push_back(data[order[i]].image_id);
          patients.push_back(data[order[i]].patient_id);
        }
        lr = one_cycle_lr(step, total, config.lr_lower, config.lr_upper);
        nn::Tape<Scalar> tape;
        const MatrixX<Scalar> emb = model.forward(images.batch(ids), tape);
        MatrixX<Scalar> demb;
        const Scalar loss = contrastive_batch_loss(emb, patients, memory,
                                                   static_cast<Scalar>(config.margin), demb);
        grad.setZero();
        model.backward(tape, demb, grad);
        if (!std::isfinite(static_cast<double>(loss)) || !grad.allFinite()) {
          state.epoch += 1;
          throw TrainingDiverged("non-finite contrastive loss at step " +
                                     std::to_string(state.global_step),
                                 state);
        }
        sgd.step(model.parameters(), grad, lr, begin, end);
        memory.push(emb, patients, state.global_step);
        state.lr_trace.push_back(lr);
        ++state.global_step;
        ++step;
        loss_sum += static_cast<double>(loss);
      }

      EpochRecord rec;
      rec.epoch = ++state.epoch;
      rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
      rec.lr = lr;
      bool is_best = false;
      if (val.size() >= 2) {
        const GalleryIndex index = embed_images(model, val, images, config.batch_size);
        const auto lists = rank_all(index, index, true);
        rec.val_metric = map_at_r(lists);
        double vloss = 0;
        size_t vpairs = 0;
        const Index n = std::min<Index>(static_cast<Index>(index.size()), 2000);
        const auto emb = index.embeddings();
        for (Index i = 0; i < n; ++i)
          for (Index j = i + 1; j < n; ++j) {
            const double d = (emb.col(i) - emb.col(j)).template cast<double>().norm();
            vloss += contrastive_loss(d, index.patient_ids()[size_t(i)] == index.patient_ids()[size_t(j)],
                                      config.margin);
            ++vpairs;
          }
        rec.val_loss = vpairs ? vloss / double(vpairs) : 0.0;
        if (state.history.empty() || rec.val_metric > state.best_val_metric) {
          state.best_val_metric = rec.val_metric;
          state.best_epoch = rec.epoch;
          state.epochs_since_improvement = 0;
          is_best = true;
        } else {
          ++state.epochs_since_improvement;
        }
      }
      state.history.push_back(rec);
      if (on_epoch) on_epoch(state, model.parameters(), is_best);
    }
  }
  return state;
}

#define REIDBENCH_INSTANTIATE(S)                                                              \
  template std::vector<double> score_pairs<S>(const VerificationNet<S>&, const PairSet&,     \
                                              ImageStore<S>&, size_t);                        \
  template TrainState train_verification<S>(const VerifTrainConfig&, const Manifest&,        \
                                            const Manifest&, VerificationNet<S>&,             \
                                            ImageStore<S>&, const EpochCallback<S>&);         \
  template TrainState train_reid<S>(const ReidTrainConfig&, const Manifest&, const Manifest&, \
                                    EmbeddingNet<S>&, ImageStore<S>&,                         \
                                    const EpochCallback<S>&);                                 \
  template GalleryIndex embed_images<S>(const EmbeddingNet<S>&, const Manifest&, ImageStore<S>&, \
                                        size_t);                                              \
  template S contrastive_batch_loss<S>(const MatrixX<S>&, const std::vector<std::string>&,    \
                                       const CrossBatchMemory<S>&, S, MatrixX<S>&);

REIDBENCH_INSTANTIATE(float)
REIDBENCH_INSTANTIATE(double)
#undef REIDBENCH_INSTANTIATE

}  // namespace reidbench
