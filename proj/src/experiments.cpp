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

#include "reidbench/experiments.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>

#include "json.hpp"
#include "reidbench/checkpoint.hpp"
#include "reidbench/csv.hpp"
#include "reidbench/format.hpp"
#include "reidbench/grad_cam.hpp"
#include "reidbench/random.hpp"
#include "reidbench/reports.hpp"

namespace reidbench {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Context {
  const RunConfig& config;
  fs::path out;
  std::ostream& log;
};

PreprocessSpec preprocess_spec(const RunConfig& c, Index resolution) {
  return {resolution, c.model.mean, c.model.stddev};
}

Manifest load_manifest(const RunConfig& c, const fs::path& path) {
  ManifestSchema schema = ManifestSchema::chestxray14(c.data.image_root);
  Manifest m = read_manifest(path, schema);
  return m;
}

SplitAssignment load_split(const Context& ctx, const Manifest& manifest) {
  const RunConfig& c = ctx.config;
  if (!c.data.split_file.empty()) return parse_split(read_text_file(c.data.split_file));
  return patient_wise_split(manifest, c.data.split_fractions,
                            effective_seed(c, SeedStream::kSplit));
}

std::string fixed_epoch_name(size_t epoch) {
  std::ostringstream out;
  out << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return out.str();
}

ordered_json split_counts(const Manifest& m) {
  return {{"images", m.size()}, {"patients", m.patient_count()}};
}

PairMeta pair_meta(const ImageRecord& a, const ImageRecord& b) {
  PairMeta meta;
  if (a.age_valid && b.age_valid) meta.age_diff_years = std::abs(a.age_years - b.age_years);
  meta.abnormality = a.finding_labels == b.finding_labels ? "unchanged" : "changed";
  if (a.view != View::kUnknown && b.view != View::kUnknown) meta.view_changed = a.view != b.view;
  return meta;
}

PairSet eval_pairs(const Context& ctx, const Manifest& manifest) {
  const RunConfig& c = ctx.config;
  if (!c.data.pairs.empty()) {
    PairSet pairs = parse_pairs(read_text_file(c.data.pairs));
    validate_pair_labels(pairs, manifest);
    return pairs;
  }
  const Manifest subset = split_subset(manifest, load_split(ctx, manifest), c.data.eval_split);
  return build_evaluation_pairs(subset, effective_seed(c, SeedStream::kEvalPairs));
}

VerificationNetSpec verif_spec(const RunConfig& c) {
  return {registered_trunk(c.model.trunk), c.model.verif_resolution, c.model.verif_pool};
}

EmbeddingNetSpec reid_spec(const RunConfig& c) {
  return {registered_trunk(c.model.trunk), c.model.reid_resolution, c.model.reid_pool,
          c.model.reduce_channels, c.model.hidden};
}

// ---------------------------------------------------------------- tasks

void task_split(Context& ctx) {
  const Manifest m = load_manifest(ctx.config, ctx.config.data.manifest);
  const SplitAssignment split = load_split(ctx, m);
  write_text_file(ctx.out / "split.csv", serialize_split(split));
  ordered_json summary;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    summary[std::string(to_string(s))] = split_counts(split_subset(m, split, s));
  write_text_file(ctx.out / "split_summary.json", summary.dump(2) + "\n");
  ctx.log << "split " << m.size() << " images of " << m.patient_count() << " patients\n";
}

void task_mine(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const SplitAssignment split = load_split(ctx, m);
  MiningConfig mining = c.verif.mining;
  mining.seed = effective_seed(c, SeedStream::kMining);
  const PairSet train = build_training_pairs(split_subset(m, split, Split::kTrain), mining, 1);
  write_text_file(ctx.out / "pairs_train.csv", serialize_pairs(train));
  ordered_json summary = {{"train", {{"pairs", train.size()}, {"positives", train.positives()}}}};
  for (Split s : {Split::kVal, Split::kTest}) {
    const Manifest subset = split_subset(m, split, s);
    const PairSet pairs = build_evaluation_pairs(subset, effective_seed(c, SeedStream::kEvalPairs));
    write_text_file(ctx.out / ("pairs_" + std::string(to_string(s)) + ".csv"),
                    serialize_pairs(pairs));
    summary[std::string(to_string(s))] = {{"pairs", pairs.size()},
                                          {"positives", pairs.positives()}};
  }
  write_text_file(ctx.out / "pairs_summary.json", summary.dump(2) + "\n");
}

void task_synth(Context& ctx) {
  SyntheticSpec spec = ctx.config.synth;
  spec.seed = effective_seed(ctx.config, SeedStream::kSynth);
  const Manifest m = generate(spec, ctx.out);
  ctx.log << "generated " << m.size() << " images of " << m.patient_count() << " identities\n";
}

void write_history(const Context& ctx, const TrainState& state) {
  write_text_file(ctx.out / "history.csv", history_csv(state));
}

void task_train_verif(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const SplitAssignment split = load_split(ctx, m);
  write_text_file(ctx.out / "split.csv", serialize_split(split));
  const Manifest train = split_subset(m, split, Split::kTrain);
  const Manifest val = split_subset(m, split, Split::kVal);

  VerificationNet<float> model(verif_spec(c));
  model.initialize(effective_seed(c, SeedStream::kInit));
  ImageStore<float> images(m, preprocess_spec(c, c.model.verif_resolution));

  VerifTrainConfig cfg = c.verif;
  cfg.seed = effective_seed(c, SeedStream::kShuffle);
  cfg.mining.seed = effective_seed(c, SeedStream::kMining);
  fs::create_directories(ctx.out / "checkpoints");
  VerificationNet<float> snapshot(model.spec());
  auto on_epoch = [&](const TrainState& s, const VectorX<float>& params, bool is_best) {
    snapshot.parameters() = params;
    const CheckpointMeta meta{ModelKind::kVerification, s.epoch, s.global_step};
    save_checkpoint(ctx.out / "checkpoints" / fixed_epoch_name(s.epoch), snapshot, meta);
    if (is_best) save_checkpoint(ctx.out / "checkpoints" / "best.ckpt", snapshot, meta);
    write_history(ctx, s);
    const auto& r = s.history.back();
    ctx.log << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
            << " val_auc " << r.val_metric << (is_best ? " *" : "") << "\n";
  };
  TrainState state;
  try {
    state = train_verification<float>(cfg, train, val, model, images, on_epoch);
  } catch (const TrainingDiverged& e) {
    write_history(ctx, e.state());
    throw;
  }
  save_checkpoint(ctx.out / "model.ckpt", model,
                  {ModelKind::kVerification, state.best_epoch, state.global_step});
  ordered_json summary = {{"epochs", state.epoch},
                          {"best_epoch", state.best_epoch},
                          {"best_val_metric", state.best_val_metric},
                          {"early_stopped", state.early_stopped},
                          {"train", split_counts(train)},
                          {"val", split_counts(val)}};
  write_text_file(ctx.out / "train_summary.json", summary.dump(2) + "\n");
}

void task_train_reid(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const SplitAssignment split = load_split(ctx, m);
  write_text_file(ctx.out / "split.csv", serialize_split(split));
  const Manifest train = split_subset(m, split, Split::kTrain);
  const Manifest val = split_subset(m, split, Split::kVal);

  EmbeddingNet<float> model(reid_spec(c));
  model.initialize(effective_seed(c, SeedStream::kInit));
  ImageStore<float> images(m, preprocess_spec(c, c.model.reid_resolution));

  ReidTrainConfig cfg = c.reid;
  cfg.seed = effective_seed(c, SeedStream::kShuffle);
  fs::create_directories(ctx.out / "checkpoints");
  EmbeddingNet<float> snapshot(model.spec());
  auto on_epoch = [&](const TrainState& s, const VectorX<float>& params, bool is_best) {
    snapshot.parameters() = params;
    const CheckpointMeta meta{ModelKind::kEmbedding, s.epoch, s.global_step};
    save_checkpoint(ctx.out / "checkpoints" / fixed_epoch_name(s.epoch), snapshot, meta);
    if (is_best) save_checkpoint(ctx.out / "checkpoints" / "best.ckpt", snapshot, meta);
    write_history(ctx, s);
    const auto& r = s.history.back();
    ctx.log << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_map_at_r "
            << r.val_metric << " lr " << r.lr << (is_best ? " *" : "") << "\n";
  };
  TrainState state;
  try {
    state = train_reid<float>(cfg, train, val, model, images, on_epoch);
  } catch (const TrainingDiverged& e) {
    write_history(ctx, e.state());
    throw;
  }
  save_checkpoint(ctx.out / "model.ckpt", model,
                  {ModelKind::kEmbedding, state.epoch, state.global_step});
  ordered_json summary = {{"epochs", state.epoch},
                          {"best_epoch", state.best_epoch},
                          {"best_val_map_at_r", state.best_val_metric},
                          {"train", split_counts(drop_single_image_patients(train))},
                          {"val", split_counts(val)}};
  write_text_file(ctx.out / "train_summary.json", summary.dump(2) + "\n");
}

void task_eval_verif(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const auto model = load_verification_checkpoint<float>(c.model.checkpoint);
  ImageStore<float> images(m, preprocess_spec(c, model.spec().resolution));
  const PairSet pairs = eval_pairs(ctx, m);
  const std::vector<double> scores = score_pairs(model, pairs, images);

  std::vector<ScoredPair> scored;
  std::string score_csv = "image_id_1,image_id_2,label,score\n";
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs.pairs[i];
    scored.push_back({scores[i], p.label, pair_meta(*m.find(p.image_id_1), *m.find(p.image_id_2))});
    score_csv += csv::join({p.image_id_1, p.image_id_2, std::to_string(p.label),
                           format_double(scores[i])}) +
                 "\n";
  }
  write_text_file(ctx.out / "scores.csv", score_csv);
  const VerificationReport report = evaluate_verification(
      scored, c.eval.threshold, c.eval.n_boot, c.eval.alpha, effective_seed(c, SeedStream::kBootstrap));
  write_text_file(ctx.out / "verification_report.json", to_json(report));
  write_text_file(ctx.out / "verification_report.csv", to_csv(report));
  write_text_file(ctx.out / "roc.csv", roc_csv(roc_and_auc(scored)));

  std::vector<ScoredPair> positives;
  for (const auto& s : scored)
    if (s.label == 1) positives.push_back(s);
  const std::pair<BinKey, const char*> keys[] = {
      {BinKey::kAgeDiff, "age_diff"}, {BinKey::kAbnormality, "abnormality"}, {BinKey::kView, "view"}};
  for (const auto& [key, name] : keys) {
    std::vector<ScoredPair> usable;
    for (const auto& s : positives) {
      const bool has = key == BinKey::kAgeDiff       ? s.meta.age_diff_years.has_value()
                       : key == BinKey::kAbnormality ? s.meta.abnormality.has_value()
                                                     : s.meta.view_changed.has_value();
      if (has) usable.push_back(s);
    }
    const auto bins = tpr_by_bins(usable, key, c.eval.threshold);
    write_text_file(ctx.out / ("tpr_" + std::string(name) + ".csv"), to_csv(bins));
    write_text_file(ctx.out / ("tpr_" + std::string(name) + ".json"),
                    to_json(bins, key, c.eval.threshold));
  }
  ctx.log << "AUC " << report.auc.value_or(0) << " over " << pairs.size() << " pairs\n";
}

void task_eval_reid(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const Manifest subset = split_subset(m, load_split(ctx, m), c.data.eval_split);
  const auto model = load_embedding_checkpoint<float>(c.model.checkpoint);
  const std::string model_id = checkpoint_id(c.model.checkpoint);
  std::string table = "resolution,map_at_r,r_precision,precision_at_1,queries,skipped\n";
  for (Index r : c.eval.resolutions) {
    ImageStore<float> images(subset, preprocess_spec(c, r));
    GalleryIndex index = embed_images(model, subset, images);
    index.model_id = model_id;
    const auto lists = rank_all(index, index, c.eval.exclude_self);
    const RetrievalReport report = evaluate_retrieval(lists);
    const std::string tag = std::to_string(r);
    index.save(ctx.out / ("index_" + tag + ".rbidx"));
    write_text_file(ctx.out / ("retrieval_" + tag + ".json"), to_json(report, r));
    const std::string row = to_csv(report, r);
    table += row.substr(row.find('\n') + 1);
    ctx.log << "resolution " << r << " mAP@R " << report.map_at_r << " P@1 "
            << report.precision_at_1 << "\n";
  }
  write_text_file(ctx.out / "retrieval.csv", table);
}

void task_attack(Context& ctx) {
  const RunConfig& c = ctx.config;
  Manifest queries;
  if (!c.attack.queries.empty()) {
    queries = load_manifest(c, c.attack.queries);
  } else {
    const Manifest m = load_manifest(c, c.data.manifest);
    queries = split_subset(m, load_split(ctx, m), c.data.eval_split);
  }
  const Manifest gallery = c.attack.gallery.empty() ? queries : load_manifest(c, c.attack.gallery);

  GalleryIndex gallery_index;
  std::optional<EmbeddingNet<float>> model;
  if (!c.model.checkpoint.empty()) model.emplace(load_embedding_checkpoint<float>(c.model.checkpoint));
  if (!c.attack.index.empty()) {
    gallery_index = GalleryIndex::load(c.attack.index);
  } else {
    ImageStore<float> images(gallery, preprocess_spec(c, c.model.reid_resolution));
    gallery_index = embed_images(*model, gallery, images);
    gallery_index.model_id = checkpoint_id(c.model.checkpoint);
  }
  if (!model) throw ConfigError("attack needs model.checkpoint to embed the queries");
  ImageStore<float> query_images(queries, preprocess_spec(c, gallery_index.resolution));
  const GalleryIndex query_index = embed_images(*model, queries, query_images);

  AttackReport report =
      attack_report(query_index, gallery_index, c.eval.k_list, c.eval.exclude_self, c.eval.top_k);

  if (!c.attack.verification_checkpoint.empty()) {
    const auto verif = load_verification_checkpoint<float>(c.attack.verification_checkpoint);
    const PreprocessSpec vspec = preprocess_spec(c, verif.spec().resolution);
    ImageStore<float> vimages(queries, vspec);
    const std::function<double(const FeatureMaps<float>&, const FeatureMaps<float>&)> fn =
        [&](const FeatureMaps<float>& a, const FeatureMaps<float>& b) {
          return static_cast<double>(verif.forward(a, b));
        };
    for (auto& q : report.queries)
      q.verification_matches = verification_sweep<float>(vimages.get(q.query_id), gallery, fn,
                                                         c.eval.threshold, vspec);
  }
  gallery_index.save(ctx.out / "gallery.rbidx");
  write_text_file(ctx.out / "attack_report.json", to_json(report));
  write_text_file(ctx.out / "attack_queries.csv", attack_queries_csv(report));
  ctx.log << "attack P@1 " << report.retrieval.precision_at_1 << " over "
          << report.retrieval.queries << " queries\n";
}

void task_explain(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Manifest m = load_manifest(c, c.data.manifest);
  const auto model = load_verification_checkpoint<float>(c.model.checkpoint);
  const PreprocessSpec spec = preprocess_spec(c, model.spec().resolution);
  ImageStore<float> images(m, spec);
  const PairSet pairs = eval_pairs(ctx, m);
  fs::create_directories(ctx.out / "explain");
  ordered_json listing = ordered_json::array();
  for (size_t i = 0; i < std::min(c.explain.count, pairs.size()); ++i) {
    const auto& p = pairs.pairs[i];
    const auto& x1 = images.get(p.image_id_1);
    const auto& x2 = images.get(p.image_id_2);
    const auto [a, b] = grad_cam(model, x1, x2, c.explain.layer);
    const std::string stem = "pair_" + std::to_string(i);
    for (const auto& [map, id, suffix] :
         {std::tuple{&a, p.image_id_1, "_1.png"}, std::tuple{&b, p.image_id_2, "_2.png"}}) {
      Raster base = read_png(m.find(id)->source_path);
      Plane<double> gray(base.height, base.width);
      for (Index y = 0; y < base.height; ++y)
        for (Index x = 0; x < base.width; ++x) gray(y, x) = base.at(y, x, 0);
      const Plane<double> small = resize_bilinear(gray, spec.resolution, spec.resolution);
      Raster resized{spec.resolution, spec.resolution, 1,
                     std::vector<std::uint8_t>(size_t(spec.resolution * spec.resolution))};
      for (Index k = 0; k < small.size(); ++k)
        resized.pixels[size_t(k)] =
            static_cast<std::uint8_t>(std::lround(std::clamp(small.data()[k], 0.0, 255.0)));
      write_png(ctx.out / "explain" / (stem + suffix), overlay_heatmap(resized, *map));
    }
    listing.push_back({{"pair", i},
                       {"image_id_1", p.image_id_1},
                       {"image_id_2", p.image_id_2},
                       {"label", p.label},
                       {"score", model.forward(x1, x2)},
                       {"layer", c.explain.layer}});
  }
  write_text_file(ctx.out / "explain" / "pairs.json", listing.dump(2) + "\n");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

std::uint64_t effective_seed(const RunConfig& c, SeedStream stream) {
  std::uint64_t component = 0;
  switch (stream) {
    case SeedStream::kSplit: component = c.seeds.split; break;
    case SeedStream::kSynth: component = c.seeds.synth; break;
    case SeedStream::kInit: component = c.seeds.init; break;
    case SeedStream::kMining: component = c.seeds.mining; break;
    case SeedStream::kShuffle: component = c.seeds.shuffle; break;
    case SeedStream::kEvalPairs: component = c.seeds.eval_pairs; break;
    case SeedStream::kBootstrap: component = c.seeds.bootstrap; break;
  }
  return derive_seed(c.seed, {static_cast<std::uint64_t>(stream), component});
}

int run_task(const RunConfig& config, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Context ctx{config, config.out_dir, log};
  fs::create_directories(ctx.out);
  fs::remove(ctx.out / "FAILED");
  write_text_file(ctx.out / "config.resolved.ini", serialize_config(config));

  std::string failure;
  try {
    switch (config.task) {
      case Task::kSplit: task_split(ctx); break;
      case Task::kMine: task_mine(ctx); break;
      case Task::kSynth: task_synth(ctx); break;
      case Task::kTrainVerif: task_train_verif(ctx); break;
      case Task::kTrainReid: task_train_reid(ctx); break;
      case Task::kEvalVerif: task_eval_verif(ctx); break;
      case Task::kEvalReid: task_eval_reid(ctx); break;
      case Task::kAttack: task_attack(ctx); break;
      case Task::kExplain: task_explain(ctx); break;
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ordered_json seeds = {{"run", config.seed}};
  const std::pair<SeedStream, const char*> streams[] = {
      {SeedStream::kSplit, "split"},         {SeedStream::kSynth, "synth"},
      {SeedStream::kInit, "init"},           {SeedStream::kMining, "mining"},
      {SeedStream::kShuffle, "shuffle"},     {SeedStream::kEvalPairs, "eval_pairs"},
      {SeedStream::kBootstrap, "bootstrap"}};
  for (const auto& [s, name] : streams) seeds[name] = effective_seed(config, s);
  ordered_json record = {{"task", std::string(to_string(config.task))},
                         {"status", failure.empty() ? "ok" : "failed"},
                         {"version", kVersion},
                         {"resolved_config", "config.resolved.ini"},
                         {"seeds", seeds},
                         {"started_utc", started},
                         {"wall_time_seconds", wall}};
  if (!failure.empty()) record["error"] = failure;
  write_text_file(ctx.out / "run.json", record.dump(2) + "\n");
  if (!failure.empty()) {
    write_text_file(ctx.out / "FAILED", failure + "\n");
    log << "error: " << failure << "\n";
    return 1;
  }
  return 0;
}

std::vector<std::pair<std::string, std::string>> expand_sweep(
    std::string_view base_text,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
    const fs::path& out_dir) {
  for (const auto& [key, values] : grid)
    if (values.empty()) throw ConfigError("sweep key '" + key + "' has no values");
  std::vector<size_t> pos(grid.size(), 0);
  std::vector<std::pair<std::string, std::string>> out;
  while (true) {
    const std::string name = "run_" + std::to_string(out.size());
    std::vector<std::pair<std::string, std::string>> overrides;
    for (size_t i = 0; i < grid.size(); ++i) overrides.emplace_back(grid[i].first, grid[i].second[pos[i]]);
    overrides.emplace_back("run.out", (out_dir / name).string());
    out.emplace_back(name + ".ini", apply_overrides(base_text, overrides));
    size_t i = grid.size();
    while (i > 0) {
      --i;
      if (++pos[i] < grid[i].second.size()) break;
      pos[i] = 0;
      if (i == 0) return out;
    }
    if (grid.empty()) return out;
  }
}

}  // namespace reidbench
