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

#include <algorithm>

#include "reidbench/attack.hpp"
#include "reidbench/synthetic.hpp"
#include "reidbench/training.hpp"
#include "support.hpp"

using namespace reidbench;

namespace {

Embedding<float> random_embedding(std::mt19937_64& rng) {
  std::normal_distribution<float> n(0, 1);
  Embedding<float> e;
  for (Index i = 0; i < kEmbeddingDim; ++i) e[i] = n(rng);
  return e;
}

/// Entries "g<i>" spread over `patients` identities.
GalleryIndex random_index(size_t n, size_t patients, std::mt19937_64& rng) {
  GalleryIndex index;
  index.model_id = "test";
  index.resolution = 64;
  for (size_t i = 0; i < n; ++i)
    index.add("g" + std::to_string(i), "p" + std::to_string(rng() % patients), random_embedding(rng));
  return index;
}

struct Brute {
  std::string id;
  double distance;
};

std::vector<Brute> brute_rank(const Embedding<float>& q, const GalleryIndex& index,
                              const std::string& skip) {
  std::vector<Brute> out;
  for (size_t i = 0; i < index.size(); ++i) {
    if (index.image_ids()[i] == skip) continue;
    double s = 0;
    for (Index k = 0; k < kEmbeddingDim; ++k) {
      const double d = double(q[k]) - double(index.embedding(i)[k]);
      s += d * d;
    }
    out.push_back({index.image_ids()[i], std::sqrt(s)});
  }
  std::sort(out.begin(), out.end(), [](const Brute& a, const Brute& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  return out;
}

}  // namespace

TEST_CASE("rank_query agrees with an exhaustive sort on every rank") {
  std::mt19937_64 rng(1);
  const GalleryIndex index = random_index(2000, 300, rng);
  for (int q = 0; q < 30; ++q) {
    const size_t pos = rng() % index.size();
    const Embedding<float> query = q % 2 ? index.embedding(pos) : random_embedding(rng);
    const std::string qid = q % 2 ? index.image_ids()[pos] : "outside";
    const RankedList got = rank_query(query, qid, index.patient_ids()[pos], index, true);
    const auto want = brute_rank(query, index, qid);
    REQUIRE(got.entries.size() == want.size());
    for (size_t r = 0; r < want.size(); ++r) {
      REQUIRE(got.entries[r].image_id == want[r].id);
      REQUIRE(std::abs(got.entries[r].distance - want[r].distance) <= 1e-9);
      if (r) REQUIRE(got.entries[r].distance >= got.entries[r - 1].distance);
    }
  }
}

TEST_CASE("exclude_self removes exactly the query entry") {
  std::mt19937_64 rng(2);
  const GalleryIndex index = random_index(50, 10, rng);
  const auto with = rank_query(index.embedding(7), "g7", index.patient_ids()[7], index, false);
  const auto without = rank_query(index.embedding(7), "g7", index.patient_ids()[7], index, true);
  CHECK(with.entries.front().image_id == "g7");
  CHECK(with.entries.front().distance == 0);
  CHECK(with.entries.size() == without.entries.size() + 1);
  CHECK(std::equal(without.entries.begin(), without.entries.end(), with.entries.begin() + 1,
                   [](const RankedEntry& a, const RankedEntry& b) { return a.image_id == b.image_id; }));
  CHECK(with.relevant_count == without.relevant_count + 1);
}

TEST_CASE("relevance flags follow patient ids") {
  std::mt19937_64 rng(3);
  const GalleryIndex index = random_index(100, 7, rng);
  const auto l = rank_query(random_embedding(rng), "x", "p3", index, true);
  size_t r = 0;
  for (const auto& e : l.entries) {
    const size_t pos = *index.position(e.image_id);
    CHECK(e.relevant == int(index.patient_ids()[pos] == "p3"));
    r += size_t(e.relevant);
  }
  CHECK(l.relevant_count == r);
}

TEST_CASE("index save and load round-trip distances bitwise") {
  std::mt19937_64 rng(4);
  const GalleryIndex index = random_index(500, 50, rng);
  testing::TempDir dir("index");
  index.save(dir / "g.rbidx");
  const GalleryIndex back = GalleryIndex::load(dir / "g.rbidx");
  CHECK(back.model_id == "test");
  CHECK(back.resolution == 64);
  CHECK(back.image_ids() == index.image_ids());
  CHECK(back.patient_ids() == index.patient_ids());
  for (int q = 0; q < 20; ++q) {
    const Embedding<float> e = random_embedding(rng);
    const Eigen::VectorXd a = index.distances(e), b = back.distances(e);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * size_t(a.size())) == 0);
  }
  CHECK(GalleryIndex::from_bytes(index.to_bytes()).to_bytes() == index.to_bytes());
}

TEST_CASE("corrupt index files are rejected") {
  std::mt19937_64 rng(5);
  const std::string bytes = random_index(5, 2, rng).to_bytes();
  CHECK_THROWS(GalleryIndex::from_bytes(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(GalleryIndex::from_bytes("garbage"));
  std::string wrong = bytes;
  wrong[0] = 'X';
  CHECK_THROWS(GalleryIndex::from_bytes(wrong));
}

TEST_CASE("index rejects duplicate ids and non-finite embeddings") {
  GalleryIndex index;
  Embedding<float> e = Embedding<float>::Zero();
  index.add("a", "p", e);
  CHECK_THROWS(index.add("a", "p", e));
  e[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS(index.add("b", "p", e));
  CHECK(index.size() == 1);
}

TEST_CASE("hit@1 equals precision@1 when the gallery is the query set") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const GalleryIndex index = random_index(200, 40, rng);
    const AttackReport report = attack_report(index, index, {1, 5, 10}, true);
    const auto lists = rank_all(index, index, true);
    REQUIRE(report.hit_rates.size() == 3);
    CHECK(report.hit_rates[0].rate == precision_at_1(lists));
    CHECK(report.retrieval.precision_at_1 == report.hit_rates[0].rate);
    CHECK(report.hit_rates[1].rate >= report.hit_rates[0].rate);
  }
}

TEST_CASE("attack report on 20 identities matches hand counts") {
  // identity i has images at embedding values i*10 (+0, +1, +2 on axis 0),
  // so every query's nearest neighbours are its own identity
  GalleryIndex index;
  std::mt19937_64 rng(7);
  size_t total = 0;
  for (size_t p = 0; p < 20; ++p) {
    const size_t k = 1 + p % 3;
    for (size_t i = 0; i < k; ++i, ++total) {
      Embedding<float> e = Embedding<float>::Zero();
      e[0] = float(p * 10 + i);
      index.add("p" + std::to_string(p) + "_" + std::to_string(i), "p" + std::to_string(p), e);
    }
  }
  const AttackReport report = attack_report(index, index, {1, 5}, true, 3);
  // identities with one image (p % 3 == 0) have R = 0
  size_t singles = 0;
  for (size_t p = 0; p < 20; ++p) singles += p % 3 == 0 ? 1 : 0;
  CHECK(report.retrieval.skipped == singles);
  CHECK(report.retrieval.queries == total - singles);
  CHECK(report.retrieval.precision_at_1 == 1.0);
  CHECK(report.retrieval.map_at_r == 1.0);
  CHECK(report.hit_rates[0].rate == 1.0);
  CHECK(report.queries.size() == total);
  for (const auto& q : report.queries) {
    CHECK(q.top.size() == 3);
    if (q.relevant_count == 0) CHECK_FALSE(q.hit_rank.has_value());
    else CHECK(*q.hit_rank == 1);
  }
}

TEST_CASE("attack aggregates do not depend on query order") {
  std::mt19937_64 rng(8);
  const GalleryIndex gallery = random_index(300, 30, rng);
  GalleryIndex queries, reversed;
  for (size_t i = 0; i < 60; ++i)
    queries.add(gallery.image_ids()[i], gallery.patient_ids()[i], gallery.embedding(i));
  for (size_t i = 60; i-- > 0;)
    reversed.add(gallery.image_ids()[i], gallery.patient_ids()[i], gallery.embedding(i));
  const auto a = attack_report(queries, gallery, {1, 5, 10}), b = attack_report(reversed, gallery, {1, 5, 10});
  CHECK(std::abs(a.retrieval.map_at_r - b.retrieval.map_at_r) <= 1e-12);
  CHECK(a.retrieval.precision_at_1 == b.retrieval.precision_at_1);
  for (size_t k = 0; k < 3; ++k) CHECK(a.hit_rates[k].rate == b.hit_rates[k].rate);
}

TEST_CASE("empty gallery gives an empty verification sweep") {
  const auto q = FeatureMaps<float>::zeros({1, 3, 8, 8});
  size_t calls = 0;
  const auto matches = verification_sweep<float>(
      q, Manifest(), [&](const FeatureMaps<float>&, const FeatureMaps<float>&) { ++calls; return 1.0; },
      0.5, PreprocessSpec{8});
  CHECK(matches.empty());
  CHECK(calls == 0);
  CHECK_THROWS(attack_report(GalleryIndex(), GalleryIndex(), {1}));
}

TEST_CASE("build_index records unreadable images and embeds the rest") {
  testing::TempDir dir("build");
  SyntheticSpec spec;
  spec.n_identities = 4;
  spec.resolution = 16;
  spec.seed = 3;
  const Manifest m = generate(spec, dir.path());
  std::filesystem::remove(m[1].source_path);
  write_text_file(m[2].source_path, "broken");
  EmbeddingNet<float> net({registered_trunk("micro"), 16, 2, 4, 8});
  net.initialize(1);
  const std::function<Embedding<float>(const FeatureMaps<float>&)> embed =
      [&](const FeatureMaps<float>& x) { return net.embed(x); };
  const GalleryIndex index = build_index<float>(m, embed, PreprocessSpec{16}, "model");
  CHECK(index.size() == m.size() - 2);
  REQUIRE(index.errors.size() == 2);
  CHECK(index.errors[0].first == m[1].image_id);
  CHECK(index.errors[1].first == m[2].image_id);
  CHECK(index.errors[0].second.find(m[1].source_path.string()) != std::string::npos);

  // rebuilding yields identical embeddings
  const GalleryIndex again = build_index<float>(m, embed, PreprocessSpec{16}, "model");
  CHECK(again.to_bytes() == index.to_bytes());
}

TEST_CASE("a trained toy verifier claims the query's own image") {
  testing::TempDir dir("sweep");
  SyntheticSpec spec;
  spec.n_identities = 12;
  spec.resolution = 24;
  spec.seed = 5;
  const Manifest all = generate(spec, dir.path());
  const PreprocessSpec pre = PreprocessSpec::identity(12);
  ImageStore<double> store(all, pre);
  const auto split = patient_wise_split(all, {0.7, 0.3, 0.0}, 5);
  VerificationNet<double> net({registered_trunk("micro"), 12, 2});
  net.initialize(5);
  VerifTrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 8;
  c.max_epochs = 20;
  c.patience = 20;
  c.mining.seed = 5;
  c.seed = 5;
  train_verification<double>(c, split_subset(all, split, Split::kTrain),
                             split_subset(all, split, Split::kVal), net, store);
  CHECK(net.head_bias() > 0);
  const std::function<double(const FeatureMaps<double>&, const FeatureMaps<double>&)> verif =
      [&](const FeatureMaps<double>& a, const FeatureMaps<double>& b) {
        return double(net.forward(a, b));
      };
  for (size_t q = 0; q < all.size(); q += 5) {
    const auto matches = verification_sweep<double>(store.get(all[q].image_id), all, verif, 0.5, pre);
    CHECK(std::any_of(matches.begin(), matches.end(),
                      [&](const VerificationMatch& m) { return m.image_id == all[q].image_id; }));
    for (const auto& m : matches) CHECK(m.score >= 0.5);
  }
}
