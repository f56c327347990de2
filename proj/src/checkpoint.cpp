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

#include "reidbench/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace reidbench {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

using nlohmann::json;
constexpr char kMagic[8] = {'R', 'B', 'C', 'K', 'P', 'T', '0', '1'};

json trunk_json(const TrunkSpec& t) {
  json blocks = json::array();
  for (const auto& b : t.blocks)
    blocks.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride},
                      {"padding", b.padding}});
  return {{"name", t.name}, {"blocks", blocks}};
}

TrunkSpec trunk_from_json(const json& j) {
  TrunkSpec t;
  t.name = j.at("name").get<std::string>();
  for (const auto& b : j.at("blocks"))
    t.blocks.push_back({b.at("channels").get<Index>(), b.at("kernel").get<Index>(),
                        b.at("stride").get<Index>(), b.at("padding").get<Index>()});
  return t;
}

template <typename Scalar>
std::vector<TensorEntry> sequential_layout(const nn::Sequential<Scalar>& seq) {
  std::vector<TensorEntry> out;
  for (size_t i = 0; i < seq.size(); ++i) {
    const auto& layer = seq.layer(i);
    const Index n = layer.parameter_count();
    if (n == 0) continue;
    Index rows = 0;
    if (const auto* c = dynamic_cast<const nn::Conv2d<Scalar>*>(&layer)) rows = c->out_channels();
    else if (const auto* l = dynamic_cast<const nn::Linear<Scalar>*>(&layer)) rows = l->out_features();
    else throw Error("no tensor layout for layer kind " + std::string(layer.kind()));
    const Index cols = n / rows - 1;
    out.push_back({seq.name(i) + ".weight", {rows, cols}, seq.offset(i), rows * cols});
    out.push_back({seq.name(i) + ".bias", {rows}, seq.offset(i) + rows * cols, rows});
  }
  return out;
}

json layout_json(const std::vector<TensorEntry>& layout) {
  json out = json::array();
  for (const auto& t : layout)
    out.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"count", t.count}});
  return out;
}

void write_file(const std::filesystem::path& path, const json& manifest,
                const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError(path.string(), "cannot open for writing");
  const std::string text = manifest.dump();
  const std::uint64_t text_len = text.size(), count = values.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&text_len), sizeof text_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw LoadError(path.string(), "write failed");
}

struct RawCheckpoint {
  json manifest;
  std::vector<double> values;
};

RawCheckpoint read_file(const std::filesystem::path& path, bool with_values = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open checkpoint");
  char magic[8];
  std::uint64_t text_len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw LoadError(path.string(), "not a reid-bench checkpoint");
  if (!in.read(reinterpret_cast<char*>(&text_len), sizeof text_len) || text_len > (1u << 26))
    throw LoadError(path.string(), "truncated checkpoint header");
  std::string text(text_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_len)))
    throw LoadError(path.string(), "truncated checkpoint manifest");
  RawCheckpoint raw;
  try {
    raw.manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw LoadError(path.string(), std::string("bad checkpoint manifest: ") + e.what());
  }
  if (!with_values) return raw;
  std::uint64_t count = 0;
  if (!in.read(reinterpret_cast<char*>(&count), sizeof count))
    throw LoadError(path.string(), "truncated checkpoint");
  raw.values.resize(count);
  if (!in.read(reinterpret_cast<char*>(raw.values.data()),
               static_cast<std::streamsize>(count * sizeof(double))))
    throw LoadError(path.string(), "truncated parameter block");
  return raw;
}

const char* kind_name(ModelKind k) {
  return k == ModelKind::kVerification ? "verification" : "embedding";
}

template <typename Model>
void save_any(const std::filesystem::path& path, const Model& model, const json& spec,
              CheckpointMeta meta) {
  json manifest = {{"format_version", 1},
                   {"kind", kind_name(meta.kind)},
                   {"spec", spec},
                   {"epoch", meta.epoch},
                   {"global_step", meta.global_step},
                   {"parameter_count", model.parameter_count()},
                   {"tensors", layout_json(tensor_layout(model))}};
  std::vector<double> values(static_cast<size_t>(model.parameter_count()));
  for (Index i = 0; i < model.parameter_count(); ++i)
    values[size_t(i)] = static_cast<double>(model.parameters()[i]);
  write_file(path, manifest, values);
}

template <typename Model>
void restore(const std::filesystem::path& path, const RawCheckpoint& raw, Model& model,
             ModelKind kind, CheckpointMeta* meta) {
  const json& m = raw.manifest;
  if (m.at("parameter_count").get<Index>() != model.parameter_count() ||
      static_cast<Index>(raw.values.size()) != model.parameter_count())
    throw LoadError(path.string(), "parameter count does not match the stored spec");
  if (m.at("tensors") != layout_json(tensor_layout(model)))
    throw LoadError(path.string(), "tensor table does not match the stored spec");
  using Scalar = typename std::decay_t<decltype(model.parameters())>::Scalar;
  for (Index i = 0; i < model.parameter_count(); ++i)
    model.parameters()[i] = static_cast<Scalar>(raw.values[size_t(i)]);
  if (meta) {
    meta->kind = kind;
    meta->epoch = m.at("epoch").get<size_t>();
    meta->global_step = m.at("global_step").get<long long>();
  }
}

void expect_kind(const std::filesystem::path& path, const json& m, ModelKind kind) {
  const std::string got = m.at("kind").get<std::string>();
  if (got != kind_name(kind))
    throw LoadError(path.string(), "expected a " + std::string(kind_name(kind)) +
                                       " checkpoint, found " + got);
}

}  // namespace

template <typename Scalar>
std::vector<TensorEntry> tensor_layout(const VerificationNet<Scalar>& model) {
  auto out = sequential_layout(model.encoder());
  const Index head = model.encoder().end_offset();
  out.push_back({"head.weight", {kEmbeddingDim}, head, kEmbeddingDim});
  out.push_back({"head.bias", {1}, head + kEmbeddingDim, 1});
  return out;
}

template <typename Scalar>
std::vector<TensorEntry> tensor_layout(const EmbeddingNet<Scalar>& model) {
  return sequential_layout(model.encoder());
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const VerificationNet<Scalar>& model,
                     CheckpointMeta meta) {
  meta.kind = ModelKind::kVerification;
  const auto& s = model.spec();
  save_any(path, model,
           {{"trunk", trunk_json(s.trunk)}, {"resolution", s.resolution}, {"pool", s.pool}}, meta);
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet<Scalar>& model,
                     CheckpointMeta meta) {
  meta.kind = ModelKind::kEmbedding;
  const auto& s = model.spec();
  save_any(path, model,
           {{"trunk", trunk_json(s.trunk)},
            {"resolution", s.resolution},
            {"pool", s.pool},
            {"reduce_channels", s.reduce_channels},
            {"hidden", s.hidden}},
           meta);
}

template <typename Scalar>
VerificationNet<Scalar> load_verification_checkpoint(const std::filesystem::path& path,
                                                     CheckpointMeta* meta) {
  const RawCheckpoint raw = read_file(path);
  try {
    expect_kind(path, raw.manifest, ModelKind::kVerification);
    const json& s = raw.manifest.at("spec");
    VerificationNet<Scalar> model({trunk_from_json(s.at("trunk")), s.at("resolution").get<Index>(),
                                   s.at("pool").get<Index>()});
    restore(path, raw, model, ModelKind::kVerification, meta);
    return model;
  } catch (const json::exception& e) {
    throw LoadError(path.string(), std::string("bad checkpoint manifest: ") + e.what());
  }
}

template <typename Scalar>
EmbeddingNet<Scalar> load_embedding_checkpoint(const std::filesystem::path& path,
                                               CheckpointMeta* meta) {
  const RawCheckpoint raw = read_file(path);
  try {
    expect_kind(path, raw.manifest, ModelKind::kEmbedding);
    const json& s = raw.manifest.at("spec");
    EmbeddingNet<Scalar> model({trunk_from_json(s.at("trunk")), s.at("resolution").get<Index>(),
                                s.at("pool").get<Index>(), s.at("reduce_channels").get<Index>(),
                                s.at("hidden").get<Index>()});
    restore(path, raw, model, ModelKind::kEmbedding, meta);
    return model;
  } catch (const json::exception& e) {
    throw LoadError(path.string(), std::string("bad checkpoint manifest: ") + e.what());
  }
}

ModelKind checkpoint_kind(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_file(path, false);
  const std::string kind = raw.manifest.value("kind", "");
  if (kind == "verification") return ModelKind::kVerification;
  if (kind == "embedding") return ModelKind::kEmbedding;
  throw LoadError(path.string(), "unknown checkpoint kind '" + kind + "'");
}

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open checkpoint");
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

#define REIDBENCH_INSTANTIATE(S)                                                                \
  template std::vector<TensorEntry> tensor_layout<S>(const VerificationNet<S>&);               \
  template std::vector<TensorEntry> tensor_layout<S>(const EmbeddingNet<S>&);                  \
  template void save_checkpoint<S>(const std::filesystem::path&, const VerificationNet<S>&,    \
                                   CheckpointMeta);                                            \
  template void save_checkpoint<S>(const std::filesystem::path&, const EmbeddingNet<S>&,       \
                                   CheckpointMeta);                                            \
  template VerificationNet<S> load_verification_checkpoint<S>(const std::filesystem::path&,    \
                                                              CheckpointMeta*);                \
  template EmbeddingNet<S> load_embedding_checkpoint<S>(const std::filesystem::path&,          \
                                                        CheckpointMeta*);

REIDBENCH_INSTANTIATE(float)
REIDBENCH_INSTANTIATE(double)
#undef REIDBENCH_INSTANTIATE

}  // namespace reidbench
