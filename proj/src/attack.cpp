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

#include "reidbench/attack.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace reidbench {
namespace {

static_assert(std::endian::native == std::endian::little,
              "index files are little-endian; add byte swapping for this platform");

constexpr char kIndexMagic[8] = {'R', 'B', 'I', 'D', 'X', 0, 0, 0};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void read(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("index file truncated");
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::optional<size_t> GalleryIndex::position(const std::string& image_id) const {
  auto it = positions_.find(image_id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

void GalleryIndex::add(const std::string& image_id, const std::string& patient_id,
                       const Embedding<float>& embedding) {
  if (!embedding.allFinite()) throw Error("non-finite embedding for '" + image_id + "'");
  if (!positions_.emplace(image_id, image_ids_.size()).second)
    throw Error("image id '" + image_id + "' already indexed");
  image_ids_.push_back(image_id);
  patient_ids_.push_back(patient_id);
  values_.insert(values_.end(), embedding.data(), embedding.data() + kEmbeddingDim);
}

Eigen::VectorXd GalleryIndex::distances(const Embedding<float>& query) const {
  const Eigen::Matrix<double, kEmbeddingDim, 1> q = query.cast<double>();
  return (embeddings().cast<double>().colwise() - q).colwise().norm().transpose();
}

std::string GalleryIndex::to_bytes() const {
  std::string out(kIndexMagic, sizeof(kIndexMagic));
  put<std::uint32_t>(out, kIndexVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kEmbeddingDim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(resolution));
  put<std::uint64_t>(out, size());
  put_string(out, model_id);
  out.append(reinterpret_cast<const char*>(values_.data()), sizeof(float) * values_.size());
  for (size_t i = 0; i < size(); ++i) {
    put_string(out, image_ids_[i]);
    put_string(out, patient_ids_[i]);
  }
  return out;
}

GalleryIndex GalleryIndex::from_bytes(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) throw Error("not an index file");
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion)
    throw Error("unsupported index version " + std::to_string(version));
  if (r.get<std::uint32_t>() != kEmbeddingDim) throw Error("index embedding width mismatch");
  GalleryIndex index;
  index.resolution = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  index.model_id = r.get_string();
  std::vector<float> values(static_cast<size_t>(count) * kEmbeddingDim);
  r.read(values.data(), sizeof(float) * values.size());
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string image_id = r.get_string();
    const std::string patient_id = r.get_string();
    index.add(image_id, patient_id,
              Eigen::Map<const Embedding<float>>(values.data() + i * kEmbeddingDim));
  }
  if (!r.done()) throw Error("trailing bytes after index table");
  return index;
}

void GalleryIndex::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError(path.string(), "cannot write index");
}

GalleryIndex GalleryIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open index");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_bytes(ss.str());
}

template <typename Scalar>
GalleryIndex build_index(
    const Manifest& manifest,
    const std::function<Embedding<Scalar>(const FeatureMaps<Scalar>&)>& embed_fn,
    const PreprocessSpec& spec, std::string model_id) {
  GalleryIndex index;
  index.model_id = std::move(model_id);
  index.resolution = spec.resolution;
  for (const auto& rec : manifest.records()) {
    FeatureMaps<Scalar> image;
    try {
      image = load_and_preprocess<Scalar>(rec.source_path, spec);
    } catch (const LoadError& e) {
      index.errors.emplace_back(rec.image_id, e.what());
      continue;
    }
    index.add(rec.image_id, rec.patient_id, embed_fn(image).template cast<float>());
  }
  return index;
}

RankedList rank_query(const Embedding<float>& query, const std::string& query_id,
                      const std::string& query_patient, const GalleryIndex& index,
                      bool exclude_self) {
  const Eigen::VectorXd d = index.distances(query);
  std::vector<RankedEntry> entries;
  entries.reserve(index.size());
  for (size_t i = 0; i < index.size(); ++i) {
    if (exclude_self && index.image_ids()[i] == query_id) continue;
    entries.push_back({index.image_ids()[i], d[static_cast<Index>(i)],
                       index.patient_ids()[i] == query_patient ? 1 : 0});
  }
  return RankedList::build(query_id, std::move(entries));
}

template <typename Scalar>
std::vector<VerificationMatch> verification_sweep(
    const FeatureMaps<Scalar>& query, const Manifest& gallery,
    const std::function<double(const FeatureMaps<Scalar>&, const FeatureMaps<Scalar>&)>& verif_fn,
    double threshold, const PreprocessSpec& spec) {
  std::vector<VerificationMatch> out;
  for (const auto& rec : gallery.records()) {
    const double s = verif_fn(query, load_and_preprocess<Scalar>(rec.source_path, spec));
    if (s >= threshold) out.push_back({rec.image_id, s});
  }
  return out;
}

std::vector<RankedList> rank_all(const GalleryIndex& queries, const GalleryIndex& gallery,
                                 bool exclude_self) {
  std::vector<RankedList> lists;
  lists.reserve(queries.size());
  for (size_t q = 0; q < queries.size(); ++q)
    lists.push_back(rank_query(queries.embedding(q), queries.image_ids()[q],
                               queries.patient_ids()[q], gallery, exclude_self));
  return lists;
}

AttackReport attack_report(const GalleryIndex& queries, const GalleryIndex& gallery,
                           const std::vector<size_t>& k_list, bool exclude_self, size_t top_k) {
  if (gallery.empty()) throw Error("attack needs a non-empty gallery");
  const std::vector<RankedList> lists = rank_all(queries, gallery, exclude_self);

  AttackReport report;
  report.resolution = gallery.resolution;
  report.retrieval = evaluate_retrieval(lists);
  std::vector<size_t> hits(k_list.size(), 0);
  for (const auto& l : lists) {
    QueryOutcome q;
    q.query_id = l.query_id;
    q.relevant_count = l.relevant_count;
    q.top.assign(l.entries.begin(),
                 l.entries.begin() + static_cast<std::ptrdiff_t>(std::min(top_k, l.entries.size())));
    for (size_t i = 0; i < l.entries.size(); ++i) {
      if (l.entries[i].relevant) {
        q.hit_rank = i + 1;
        break;
      }
    }
    if (q.relevant_count > 0 && q.hit_rank)
      for (size_t k = 0; k < k_list.size(); ++k) hits[k] += *q.hit_rank <= k_list[k] ? 1 : 0;
    report.queries.push_back(std::move(q));
  }
  for (size_t k = 0; k < k_list.size(); ++k)
    report.hit_rates.push_back(
        {k_list[k], report.retrieval.queries
                        ? static_cast<double>(hits[k]) / static_cast<double>(report.retrieval.queries)
                        : 0.0});
  return report;
}

template GalleryIndex build_index<float>(
    const Manifest&, const std::function<Embedding<float>(const FeatureMaps<float>&)>&,
    const PreprocessSpec&, std::string);
template GalleryIndex build_index<double>(
    const Manifest&, const std::function<Embedding<double>(const FeatureMaps<double>&)>&,
    const PreprocessSpec&, std::string);
template std::vector<VerificationMatch> verification_sweep<float>(
    const FeatureMaps<float>&, const Manifest&,
    const std::function<double(const FeatureMaps<float>&, const FeatureMaps<float>&)>&, double,
    const PreprocessSpec&);
template std::vector<VerificationMatch> verification_sweep<double>(
    const FeatureMaps<double>&, const Manifest&,
    const std::function<double(const FeatureMaps<double>&, const FeatureMaps<double>&)>&, double,
    const PreprocessSpec&);

}  // namespace reidbench
