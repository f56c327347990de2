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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "reidbench/losses.hpp"
#include "reidbench/optim.hpp"
#include "reidbench/training.hpp"
#include "reidbench/synthetic.hpp"
#include "support.hpp"

using namespace reidbench;
using doctest::Approx;

TEST_CASE("BCE examples and scalar oracle") {
  CHECK(bce_loss(1.0 - 1e-12, 1) == Approx(0).epsilon(1e-9));
  CHECK(bce_loss(0.5, 1) == Approx(0.693147).epsilon(1e-6));
  CHECK(bce_loss(0.5, 0) == Approx(std::log(2.0)));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(std::isfinite(bce_loss(1.0, 0)));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  std::vector<double> p(64);
  std::vector<int> y(64);
  double oracle = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    y[i] = int(rng() % 2);
    oracle += y[i] ? -std::log(p[i]) : -std::log(1 - p[i]);
    CHECK(bce_loss(p[i], y[i]) >= 0);
  }
  oracle /= 64;
  CHECK(std::abs(bce_loss<double>(p, y) - oracle) <= 1e-9);
}

TEST_CASE("contrastive loss examples") {
  CHECK(contrastive_loss(0.0, 1, 1.0) == 0);
  CHECK(contrastive_loss(1.0, 0, 1.0) == 0);
  CHECK(contrastive_loss(3.5, 0, 1.0) == 0);
  CHECK(contrastive_loss(0.5, 0, 1.0) == 0.125);
  CHECK(contrastive_loss(0.5, 1, 1.0) == 0.125);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 1000; ++i) {
    const double d = u(rng);
    const int y = int(rng() % 2);
    const double l = contrastive_loss(d, y, 1.0);
    CHECK(l >= 0);
    CHECK((l == 0) == ((y == 1 && d == 0) || (y == 0 && d >= 1)));
  }
}

TEST_CASE("one-cycle endpoints and peak") {
  for (long long total : {2LL, 3LL, 10LL, 101LL, 5000LL}) {
    CHECK(std::abs(one_cycle_lr(0, total, 0.0063, 0.1584) - 0.0063) <= 1e-9);
    CHECK(std::abs(one_cycle_lr(total / 2, total, 0.0063, 0.1584) - 0.1584) <= 1e-9);
    const double last = one_cycle_lr(total - 1, total, 0.0063, 0.1584);
    const double quantum = (0.1584 - 0.0063) / double(total - total / 2);
    CHECK(last - 0.0063 <= quantum + 1e-12);
  }
  CHECK(one_cycle_lr(0, 1, 0.0063, 0.1584) == 0.0063);
  CHECK_THROWS(one_cycle_lr(10, 10, 0.0063, 0.1584));
  CHECK_THROWS(one_cycle_lr(-1, 10, 0.0063, 0.1584));
}

TEST_CASE("one-cycle trace is unimodal") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const long long total = 2 + static_cast<long long>(rng() % 3000);
    bool descending = false;
    double prev = one_cycle_lr(0, total, 0.0063, 0.1584);
    for (long long s = 1; s < total; ++s) {
      const double lr = one_cycle_lr(s, total, 0.0063, 0.1584);
      if (lr < prev) descending = true;
      if (descending) CHECK(lr <= prev);
      CHECK(lr >= 0.0063 - 1e-15);
      CHECK(lr <= 0.1584 + 1e-15);
      prev = lr;
    }
  }
}

TEST_CASE("early stopping examples") {
  CHECK_FALSE(early_stop_check(std::vector<double>{1.0}, 5));
  CHECK(early_stop_check(std::vector<double>{0.5, 0.49, 0.49, 0.49, 0.49, 0.49, 0.49}, 5));
  CHECK_FALSE(early_stop_check(std::vector<double>{0.5, 0.49, 0.49, 0.49, 0.49, 0.49}, 5));
  std::vector<double> improving;
  for (int i = 0; i < 40; ++i) {
    improving.push_back(1.0 / (i + 1));
    CHECK_FALSE(early_stop_check(improving, 5));
  }

  EarlyStopping stop(5);
  const std::vector<double> losses{0.5, 0.6, 0.6, 0.6, 0.6, 0.6};
  for (size_t i = 0; i < losses.size(); ++i) CHECK(stop.observe(losses[i]) == (i == 5));
  CHECK(stop.best_epoch() == 1);
  CHECK(stop.best() == 0.5);
}

TEST_CASE("early stop matches a sliding-window oracle") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> h(1 + rng() % 15);
    for (auto& v : h) v = double(rng() % 5);
    const size_t patience = 1 + rng() % 5;
    bool want = false;
    if (h.size() > patience) {
      double best = h[0];
      for (size_t i = 1; i < h.size() - patience; ++i) best = std::min(best, h[i]);
      want = true;
      for (size_t i = h.size() - patience; i < h.size(); ++i)
        if (h[i] < best) want = false;
    }
    CHECK(early_stop_check(h, patience) == want);
  }
}

TEST_CASE("early stopping counter resets exactly on improvement") {
  EarlyStopping stop(3);
  const std::vector<double> v{3, 2, 2, 2.5, 1, 1, 1, 1};
  const std::vector<size_t> since{0, 0, 1, 2, 0, 1, 2, 3};
  for (size_t i = 0; i < v.size(); ++i) {
    stop.observe(v[i]);
    CHECK(stop.epochs_since_improvement() == since[i]);
    CHECK(stop.improved_last() == (since[i] == 0));
  }
}

TEST_CASE("weight decay with zero gradient shrinks the norm every step") {
  std::mt19937_64 rng(5);
  VectorX<double> p = VectorX<double>::Random(50);
  const VectorX<double> zero = VectorX<double>::Zero(50);
  Sgd<double> sgd(50, 1e-5, 0.0);
  double norm = p.norm();
  for (int s = 0; s < 100; ++s) {
    sgd.step(p, zero, one_cycle_lr(s, 100, 0.0063, 0.1584), 0, 50);
    CHECK(p.norm() < norm);
    norm = p.norm();
  }
}

TEST_CASE("contrastive batch gradient matches central differences") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 0.05);
  const std::vector<std::string> patients{"a", "b", "a", "c", "b"};
  CrossBatchMemory<double> memory(6);
  MatrixX<double> mem(kEmbeddingDim, 6);
  for (Index i = 0; i < mem.size(); ++i) mem.data()[i] = n(rng);
  memory.push(mem, {"a", "c", "d", "b", "a", "d"}, 0);
  MatrixX<double> e(kEmbeddingDim, 5);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = n(rng);
  MatrixX<double> g;
  const double loss = contrastive_batch_loss(e, patients, memory, 1.0, g);

  // scalar oracle over all mined pairs
  double oracle = 0;
  size_t count = 0;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i + 1; j < 5; ++j, ++count)
      oracle += contrastive_loss((e.col(i) - e.col(j)).norm(),
                                 int(patients[size_t(i)] == patients[size_t(j)]), 1.0);
    for (size_t m = 0; m < memory.size(); ++m, ++count)
      oracle += contrastive_loss((e.col(i) - memory[m].embedding).norm(),
                                 int(patients[size_t(i)] == memory[m].patient_id), 1.0);
  }
  CHECK(loss == Approx(oracle / double(count)).epsilon(1e-12));

  const double h = 1e-6;
  MatrixX<double> scratch;
  for (Index k = 0; k < e.size(); k += 7) {
    MatrixX<double> up = e, down = e;
    up.data()[k] += h;
    down.data()[k] -= h;
    const double fd = (contrastive_batch_loss(up, patients, memory, 1.0, scratch) -
                       contrastive_batch_loss(down, patients, memory, 1.0, scratch)) /
                      (2 * h);
    CHECK(std::abs(fd - g.data()[k]) <= 1e-4 * std::max(1e-4, std::abs(fd)));
  }
}

TEST_CASE("single-image patients are dropped from retrieval training") {
  const Manifest m = testing::manifest_with_counts({1, 3, 1, 2});
  const Manifest kept = drop_single_image_patients(m);
  CHECK(kept.size() == 5);
  CHECK(kept.patient_count() == 2);
}

TEST_CASE("history CSV layout") {
  TrainState s;
  s.history.push_back({1, 0.5, 0.25, 0.75, 0.001});
  const std::string csv = history_csv(s);
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_metric,lr\n", 0) == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
}

// ---------------------------------------------------------------- small runs

namespace {

struct ToyData {
  ImageStore<double> store{PreprocessSpec::identity(12)};
  Manifest train, val;

  explicit ToyData(std::uint64_t seed, size_t identities = 10) {
    SyntheticSpec spec;
    spec.n_identities = identities;
    spec.resolution = 24;
    spec.seed = seed;
    const Manifest all = testing::synthetic_in_memory(spec, store);
    const auto split = patient_wise_split(all, {0.7, 0.3, 0.0}, seed);
    train = split_subset(all, split, Split::kTrain);
    val = split_subset(all, split, Split::kVal);
  }
};

VerifTrainConfig small_verif(std::uint64_t seed) {
  VerifTrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 8;
  c.patience = 2;
  c.max_epochs = 3;
  c.mining = {MiningMode::kRandomizedNegatives, 0, seed};
  c.seed = seed;
  return c;
}

ReidTrainConfig small_reid(std::uint64_t seed) {
  ReidTrainConfig c;
  c.phase1_epochs = 2;
  c.phase2_epochs = 2;
  c.batch_size = 8;
  c.memory_capacity = 16;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("verification training is bit-reproducible and keeps the best epoch") {
  ToyData data(7);
  VerificationNet<double> a({registered_trunk("micro"), 12, 2}), b({registered_trunk("micro"), 12, 2});
  a.initialize(1);
  b.initialize(1);
  std::vector<VectorX<double>> snapshots;
  const TrainState sa = train_verification<double>(
      small_verif(3), data.train, data.val, a, data.store,
      [&](const TrainState&, const VectorX<double>& p, bool) { snapshots.push_back(p); });
  const TrainState sb = train_verification<double>(small_verif(3), data.train, data.val, b, data.store);
  CHECK(a.parameters() == b.parameters());
  CHECK(history_csv(sa) == history_csv(sb));
  REQUIRE(sa.best_epoch >= 1);
  REQUIRE(snapshots.size() == sa.history.size());
  CHECK(a.parameters() == snapshots[sa.best_epoch - 1]);
  double best = sa.history[0].val_loss;
  for (const auto& r : sa.history) best = std::min(best, r.val_loss);
  CHECK(sa.history[sa.best_epoch - 1].val_loss == best);
}

TEST_CASE("verification runs to max_epochs when validation keeps improving") {
  ToyData data(8);
  VerificationNet<double> net({registered_trunk("micro"), 12, 2});
  net.initialize(2);
  VerifTrainConfig c = small_verif(4);
  c.patience = 50;
  c.max_epochs = 4;
  const TrainState s = train_verification<double>(c, data.train, data.val, net, data.store);
  CHECK(s.history.size() == 4);
  CHECK_FALSE(s.early_stopped);
}

TEST_CASE("a NaN image aborts with TrainingDiverged") {
  ToyData data(9);
  auto bad = data.store.get(data.train[0].image_id);
  bad.data(0, 0) = std::numeric_limits<double>::quiet_NaN();
  data.store.put(data.train[0].image_id, bad);
  VerificationNet<double> net({registered_trunk("micro"), 12, 2});
  net.initialize(3);
  try {
    train_verification<double>(small_verif(5), data.train, data.val, net, data.store);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.state().epoch >= 1);
  }

  EmbeddingNet<double> emb({registered_trunk("micro"), 12, 2, 4, 8});
  emb.initialize(3);
  CHECK_THROWS_AS(train_reid<double>(small_reid(5), data.train, data.val, emb, data.store),
                  TrainingDiverged);
}

TEST_CASE("retrieval phase 1 leaves the trunk bitwise unchanged") {
  ToyData data(10);
  EmbeddingNet<double> net({registered_trunk("micro"), 12, 2, 4, 8});
  net.initialize(4);
  const VectorX<double> initial = net.parameters();
  const Index trunk = net.trunk_parameter_count();
  REQUIRE(trunk > 0);
  const ReidTrainConfig c = small_reid(6);
  std::vector<VectorX<double>> after;
  const TrainState s = train_reid<double>(
      c, data.train, data.val, net, data.store,
      [&](const TrainState&, const VectorX<double>& p, bool) { after.push_back(p); });
  REQUIRE(after.size() == 4);
  CHECK(after[1].head(trunk) == initial.head(trunk));
  CHECK(after[1].tail(initial.size() - trunk) != initial.tail(initial.size() - trunk));
  CHECK(after[3].head(trunk) != initial.head(trunk));

  // each phase's lr trace spans the full range
  const size_t per_phase = s.lr_trace.size() / 2;
  for (size_t phase = 0; phase < 2; ++phase) {
    const auto first = s.lr_trace.begin() + long(phase * per_phase);
    const auto [lo, hi] = std::minmax_element(first, first + long(per_phase));
    CHECK(std::abs(*lo - c.lr_lower) <= 1e-9);
    CHECK(std::abs(*hi - c.lr_upper) <= 1e-9);
    CHECK(*first == c.lr_lower);
  }
}

TEST_CASE("retrieval training is bit-reproducible") {
  ToyData data(11);
  EmbeddingNet<double> a({registered_trunk("micro"), 12, 2, 4, 8}), b({registered_trunk("micro"), 12, 2, 4, 8});
  a.initialize(5);
  b.initialize(5);
  const TrainState sa = train_reid<double>(small_reid(7), data.train, data.val, a, data.store);
  const TrainState sb = train_reid<double>(small_reid(7), data.train, data.val, b, data.store);
  CHECK(a.parameters() == b.parameters());
  CHECK(history_csv(sa) == history_csv(sb));
  CHECK(sa.lr_trace == sb.lr_trace);
}

TEST_CASE("score_pairs equals per-pair forward") {
  ToyData data(12);
  VerificationNet<double> net({registered_trunk("micro"), 12, 2});
  net.initialize(6);
  const PairSet pairs = build_evaluation_pairs(data.val, 1);
  const auto scores = score_pairs(net, pairs, data.store, 4);
  REQUIRE(scores.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i)
    CHECK(scores[i] == Approx(net.forward(data.store.get(pairs.pairs[i].image_id_1),
                                          data.store.get(pairs.pairs[i].image_id_2)))
                           .epsilon(1e-12));
}
