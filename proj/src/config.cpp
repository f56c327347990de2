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

#include "reidbench/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "reidbench/format.hpp"

namespace reidbench {
namespace {

namespace pt = boost::property_tree;

constexpr std::array<std::pair<Task, std::string_view>, 9> kTasks{{
    {Task::kSplit, "split"},
    {Task::kMine, "mine"},
    {Task::kSynth, "synth"},
    {Task::kTrainVerif, "train-verif"},
    {Task::kTrainReid, "train-reid"},
    {Task::kEvalVerif, "eval-verif"},
    {Task::kEvalReid, "eval-reid"},
    {Task::kAttack, "attack"},
    {Task::kExplain, "explain"},
}};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

// ---------------------------------------------------------------- scalar codecs
// Each parser returns an error message or nothing.

using Error_ = std::optional<std::string>;

template <typename Int>
Error_ parse_int(const std::string& s, Int& out) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    return "expected an integer, got '" + s + "'";
  out = v;
  return std::nullopt;
}

Error_ parse_double(const std::string& s, double& out) {
  if (s.empty()) return std::string("expected a number, got ''");
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0;
  in >> v;
  if (!in || in.peek() != EOF || !std::isfinite(v)) return "expected a number, got '" + s + "'";
  out = v;
  return std::nullopt;
}

Error_ parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") return out = true, std::nullopt;
  if (s == "false" || s == "0" || s == "no") return out = false, std::nullopt;
  return "expected true or false, got '" + s + "'";
}

// ---------------------------------------------------------------- field table

struct Field {
  std::string key;  // section.name
  std::string doc;
  std::function<Error_(RunConfig&, const std::string&)> parse;
  std::function<std::string(const RunConfig&)> format;
};

template <typename Get>
Field int_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) { return parse_int(s, get(c)); },
          [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field double_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) { return parse_double(s, get(c)); },
          [get](const RunConfig& c) { return format_double(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field bool_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) { return parse_bool(s, get(c)); },
          [get](const RunConfig& c) {
            return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Get>
Field string_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) -> Error_ {
            get(c) = s;
            return std::nullopt;
          },
          [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field path_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) -> Error_ {
            get(c) = std::filesystem::path(s);
            return std::nullopt;
          },
          [get](const RunConfig& c) { return get(const_cast<RunConfig&>(c)).string(); }};
}

template <typename E, typename Get>
Field enum_field(std::string key, std::string doc, std::vector<std::pair<E, std::string>> names,
                 Get get) {
  return {std::move(key), std::move(doc),
          [get, names](RunConfig& c, const std::string& s) -> Error_ {
            for (const auto& [v, n] : names)
              if (n == s) return get(c) = v, std::nullopt;
            std::string list;
            for (const auto& [v, n] : names) list += (list.empty() ? "" : ", ") + n;
            return "expected one of " + list + ", got '" + s + "'";
          },
          [get, names](const RunConfig& c) {
            for (const auto& [v, n] : names)
              if (v == get(const_cast<RunConfig&>(c))) return n;
            return std::string();
          }};
}

template <typename Get>
Field triple_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) -> Error_ {
            const auto parts = split_list(s);
            if (parts.size() != 3) return "expected three comma-separated numbers, got '" + s + "'";
            std::array<double, 3> v{};
            for (size_t i = 0; i < 3; ++i)
              if (auto e = parse_double(parts[i], v[i])) return e;
            get(c) = v;
            return std::nullopt;
          },
          [get](const RunConfig& c) {
            const auto& v = get(const_cast<RunConfig&>(c));
            return format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]);
          }};
}

template <typename Int, typename Get>
Field int_list_field(std::string key, std::string doc, Get get) {
  return {std::move(key), std::move(doc),
          [get](RunConfig& c, const std::string& s) -> Error_ {
            std::vector<Int> v;
            for (const auto& part : split_list(s)) {
              Int x{};
              if (auto e = parse_int(part, x)) return e;
              v.push_back(x);
            }
            get(c) = std::move(v);
            return std::nullopt;
          },
          [get](const RunConfig& c) {
            std::string out;
            for (auto x : get(const_cast<RunConfig&>(c)))
              out += (out.empty() ? "" : ",") + std::to_string(x);
            return out;
          }};
}

#define ACCESS(expr) [](RunConfig & c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<std::pair<Task, std::string>> tasks;
    for (const auto& [t, n] : kTasks) tasks.emplace_back(t, std::string(n));
    const std::vector<std::pair<Split, std::string>> splits{
        {Split::kTrain, "train"}, {Split::kVal, "val"}, {Split::kTest, "test"}};
    const std::vector<std::pair<MiningMode, std::string>> modes{
        {MiningMode::kFixed, "fts"}, {MiningMode::kRandomizedNegatives, "rnp"}};
    const std::vector<std::pair<MonitorMetric, std::string>> monitors{
        {MonitorMetric::kLoss, "loss"}, {MonitorMetric::kAuc, "auc"}};

    return std::vector<Field>{
        enum_field("run.task", "task to run (may come from the command line)", tasks, ACCESS(task)),
        int_field("run.seed", "master seed; every component seed is derived from it", ACCESS(seed)),
        path_field("run.out", "output directory (--out overrides)", ACCESS(out_dir)),

        path_field("data.manifest", "manifest CSV in ChestX-ray14 layout", ACCESS(data.manifest)),
        path_field("data.image_root", "image directory; empty resolves against the manifest",
                   ACCESS(data.image_root)),
        path_field("data.split_file", "patient_id,split file; empty splits by fractions",
                   ACCESS(data.split_file)),
        path_field("data.pairs", "pair CSV for eval-verif and explain; empty mines the eval split",
                   ACCESS(data.pairs)),
        triple_field("data.split_fractions", "train,val,test image fractions",
                     ACCESS(data.split_fractions)),
        enum_field("data.eval_split", "split evaluated by eval-*, attack and explain", splits,
                   ACCESS(data.eval_split)),

        int_field("synth.n_identities", "synthetic identities", ACCESS(synth.n_identities)),
        int_field("synth.min_images", "fewest images per identity", ACCESS(synth.min_images)),
        int_field("synth.max_images", "most images per identity", ACCESS(synth.max_images)),
        int_field("synth.resolution", "side of generated images in pixels",
                  ACCESS(synth.resolution)),
        int_field("synth.blobs", "Gaussian blobs in each identity pattern", ACCESS(synth.blobs)),
        double_field("synth.blob_sigma_min", "smallest blob width (fraction of side)",
                     ACCESS(synth.blob_sigma_min)),
        double_field("synth.blob_sigma_max", "largest blob width (fraction of side)",
                     ACCESS(synth.blob_sigma_max)),
        double_field("synth.rotation_degrees", "rotation jitter, uniform in +-",
                     ACCESS(synth.rotation_degrees)),
        double_field("synth.scale_min", "lower scale bound", ACCESS(synth.scale_min)),
        double_field("synth.scale_max", "upper scale bound", ACCESS(synth.scale_max)),
        double_field("synth.shift_fraction", "translation jitter (fraction of side), uniform in +-",
                     ACCESS(synth.shift_fraction)),
        double_field("synth.intensity_shift", "brightness offset, uniform in +-",
                     ACCESS(synth.intensity_shift)),
        double_field("synth.noise_sigma", "pixel noise standard deviation (0..1 scale)",
                     ACCESS(synth.noise_sigma)),

        string_field("model.trunk", "registered trunk: micro, single, toy, small",
                     ACCESS(model.trunk)),
        path_field("model.checkpoint", "checkpoint for eval-*, attack and explain",
                   ACCESS(model.checkpoint)),
        int_field("model.verif_resolution", "verification input side",
                  ACCESS(model.verif_resolution)),
        int_field("model.verif_pool", "verification pooled grid side before the 128-unit FC",
                  ACCESS(model.verif_pool)),
        int_field("model.reid_resolution", "retrieval training input side",
                  ACCESS(model.reid_resolution)),
        int_field("model.reid_pool", "retrieval adaptive pooling grid side", ACCESS(model.reid_pool)),
        int_field("model.reduce_channels", "retrieval 1x1 convolution output channels",
                  ACCESS(model.reduce_channels)),
        int_field("model.hidden", "retrieval hidden FC width", ACCESS(model.hidden)),
        triple_field("model.mean", "per-channel normalization mean", ACCESS(model.mean)),
        triple_field("model.std", "per-channel normalization standard deviation",
                     ACCESS(model.stddev)),

        double_field("verif.learning_rate", "Adam learning rate", ACCESS(verif.learning_rate)),
        int_field("verif.batch_size", "pairs per batch", ACCESS(verif.batch_size)),
        int_field("verif.patience", "epochs without improvement before stopping",
                  ACCESS(verif.patience)),
        int_field("verif.max_epochs", "epoch limit", ACCESS(verif.max_epochs)),
        enum_field("verif.mining", "fts (fixed pairs) or rnp (negatives redrawn per epoch)", modes,
                   ACCESS(verif.mining.mode)),
        int_field("verif.pairs", "training set size N_s, half positive; 0 uses all positives",
                  ACCESS(verif.mining.target_size)),
        enum_field("verif.monitor", "early-stopping quantity: loss or auc", monitors,
                   ACCESS(verif.monitor)),

        double_field("reid.lr_lower", "1cycle lower bound", ACCESS(reid.lr_lower)),
        double_field("reid.lr_upper", "1cycle upper bound", ACCESS(reid.lr_upper)),
        double_field("reid.weight_decay", "SGD L2 weight decay", ACCESS(reid.weight_decay)),
        double_field("reid.margin", "contrastive margin", ACCESS(reid.margin)),
        double_field("reid.momentum", "SGD momentum", ACCESS(reid.momentum)),
        int_field("reid.phase1_epochs", "head-only epochs", ACCESS(reid.phase1_epochs)),
        int_field("reid.phase2_epochs", "full-network epochs", ACCESS(reid.phase2_epochs)),
        int_field("reid.batch_size", "images per batch", ACCESS(reid.batch_size)),
        int_field("reid.memory_capacity", "cross-batch memory size in embeddings",
                  ACCESS(reid.memory_capacity)),

        double_field("eval.threshold", "verification decision threshold (score >= t)",
                     ACCESS(eval.threshold)),
        int_field("eval.n_boot", "bootstrap resamples for the AUC interval", ACCESS(eval.n_boot)),
        double_field("eval.alpha", "interval level is 1 - alpha", ACCESS(eval.alpha)),
        int_list_field<Index>("eval.resolutions", "eval-reid resolution sweep",
                              ACCESS(eval.resolutions)),
        bool_field("eval.exclude_self", "drop the query image from its own ranking",
                   ACCESS(eval.exclude_self)),
        int_list_field<size_t>("eval.k_list", "attack hit-rate cut-offs", ACCESS(eval.k_list)),
        int_field("eval.top_k", "ranked entries kept per attack query", ACCESS(eval.top_k)),

        path_field("attack.queries", "query manifest; empty uses the eval split",
                   ACCESS(attack.queries)),
        path_field("attack.gallery", "gallery manifest; empty uses the queries",
                   ACCESS(attack.gallery)),
        path_field("attack.index", "prebuilt gallery index file", ACCESS(attack.index)),
        path_field("attack.verification_checkpoint",
                   "verification checkpoint for a threshold sweep over the gallery",
                   ACCESS(attack.verification_checkpoint)),

        string_field("explain.layer", "convolution whose activations are weighted",
                     ACCESS(explain.layer)),
        int_field("explain.count", "pairs to explain", ACCESS(explain.count)),

        int_field("seeds.split", "patient split stream", ACCESS(seeds.split)),
        int_field("seeds.synth", "synthetic data stream", ACCESS(seeds.synth)),
        int_field("seeds.init", "parameter initialization stream", ACCESS(seeds.init)),
        int_field("seeds.mining", "pair mining stream", ACCESS(seeds.mining)),
        int_field("seeds.shuffle", "batch order stream", ACCESS(seeds.shuffle)),
        int_field("seeds.eval_pairs", "evaluation pair stream", ACCESS(seeds.eval_pairs)),
        int_field("seeds.bootstrap", "bootstrap stream", ACCESS(seeds.bootstrap)),
    };
  }();
  return table;
}

#undef ACCESS

size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_key(const std::string& key) {
  std::string best;
  size_t best_d = std::string::npos;
  for (const auto& f : fields()) {
    const size_t d = edit_distance(key, f.key);
    if (d < best_d) best_d = d, best = f.key;
  }
  // Also match on the name alone, for keys put in the wrong section.
  const auto dot = key.find('.');
  const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
  for (const auto& f : fields()) {
    const std::string fname = f.key.substr(f.key.find('.') + 1);
    if (edit_distance(name, fname) == 0 && best_d > 0) return f.key;
  }
  return best_d <= std::max<size_t>(3, key.size() / 3) ? best : std::string();
}

std::vector<std::string> check(const RunConfig& c) {
  std::vector<std::string> e;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) e.push_back(msg);
  };
  const auto& f = c.data.split_fractions;
  require(f[0] >= 0 && f[1] >= 0 && f[2] >= 0 && std::abs(f[0] + f[1] + f[2] - 1.0) <= 1e-9,
          "data.split_fractions: must be non-negative and sum to 1");
  try {
    c.synth.validate();
  } catch (const ConfigError& err) {
    e.push_back(std::string("synth: ") + err.what());
  }
  try {
    registered_trunk(c.model.trunk);
  } catch (const ConfigError& err) {
    e.push_back(std::string("model.trunk: ") + err.what());
  }
  require(c.out_dir.string().size() > 0, "run.out: must not be empty");
  require(c.model.verif_resolution > 0, "model.verif_resolution: must be positive");
  require(c.model.verif_pool > 0, "model.verif_pool: must be positive");
  require(c.model.reid_resolution > 0, "model.reid_resolution: must be positive");
  require(c.model.reid_pool > 0, "model.reid_pool: must be positive");
  require(c.model.reduce_channels > 0, "model.reduce_channels: must be positive");
  require(c.model.hidden > 0, "model.hidden: must be positive");
  for (double s : c.model.stddev) require(s > 0, "model.std: entries must be positive");
  require(c.verif.learning_rate > 0, "verif.learning_rate: must be positive");
  require(c.verif.batch_size >= 2, "verif.batch_size: must be at least 2");
  require(c.verif.patience >= 1, "verif.patience: must be at least 1");
  require(c.verif.max_epochs >= 1, "verif.max_epochs: must be at least 1");
  require(c.reid.lr_lower > 0 && c.reid.lr_lower < c.reid.lr_upper,
          "reid.lr_lower: must satisfy 0 < lr_lower < lr_upper");
  require(c.reid.margin > 0, "reid.margin: must be positive");
  require(c.reid.weight_decay >= 0, "reid.weight_decay: must be non-negative");
  require(c.reid.momentum >= 0 && c.reid.momentum < 1, "reid.momentum: must lie in [0, 1)");
  require(c.reid.phase1_epochs + c.reid.phase2_epochs > 0,
          "reid.phase1_epochs: at least one phase needs epochs");
  require(c.reid.batch_size >= 2, "reid.batch_size: must be at least 2");
  require(c.eval.threshold >= 0 && c.eval.threshold <= 1, "eval.threshold: must lie in [0, 1]");
  require(c.eval.alpha > 0 && c.eval.alpha < 1, "eval.alpha: must lie in (0, 1)");
  require(!c.eval.resolutions.empty(), "eval.resolutions: must not be empty");
  for (Index r : c.eval.resolutions) require(r > 0, "eval.resolutions: entries must be positive");
  for (size_t k : c.eval.k_list) require(k > 0, "eval.k_list: entries must be positive");
  require(c.eval.top_k > 0, "eval.top_k: must be positive");
  require(c.explain.count > 0, "explain.count: must be positive");

  const bool has_manifest = !c.data.manifest.empty();
  const bool has_checkpoint = !c.model.checkpoint.empty();
  switch (c.task) {
    case Task::kSplit:
    case Task::kMine:
    case Task::kTrainVerif:
    case Task::kTrainReid:
      require(has_manifest, "data.manifest: required by task " + std::string(to_string(c.task)));
      break;
    case Task::kSynth: break;
    case Task::kEvalVerif:
    case Task::kExplain:
      require(has_checkpoint, "model.checkpoint: required by task " + std::string(to_string(c.task)));
      require(has_manifest, "data.manifest: required by task " + std::string(to_string(c.task)));
      break;
    case Task::kEvalReid:
      require(has_checkpoint, "model.checkpoint: required by task eval-reid");
      require(has_manifest, "data.manifest: required by task eval-reid");
      break;
    case Task::kAttack:
      require(has_checkpoint, "model.checkpoint: required by task attack");
      require(has_manifest || !c.attack.queries.empty(),
              "data.manifest: required by task attack unless attack.queries is set");
      break;
  }
  return e;
}

}  // namespace

std::string_view to_string(Task task) {
  for (const auto& [t, n] : kTasks)
    if (t == task) return n;
  return "unknown";
}

std::optional<Task> parse_task(std::string_view name) {
  for (const auto& [t, n] : kTasks)
    if (n == name) return t;
  return std::nullopt;
}

std::vector<std::string> task_names() {
  std::vector<std::string> out;
  for (const auto& [t, n] : kTasks) out.emplace_back(n);
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

ConfigResult validate_config(std::string_view text, std::optional<Task> task) {
  ConfigResult result;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    result.errors.push_back("line " + std::to_string(e.line()) + ": " + e.message());
    return result;
  }

  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  RunConfig config;
  bool task_seen = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      const std::string hint = nearest_key(section);
      result.errors.push_back("key '" + section + "' must be inside a [section]" +
                              (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
      continue;
    }
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = by_key.find(key);
      if (it == by_key.end()) {
        const std::string hint = nearest_key(key);
        result.errors.push_back("unknown key '" + key + "'" +
                                (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
        continue;
      }
      if (auto err = it->second->parse(config, trim(value.data())))
        result.errors.push_back(key + ": " + *err);
      else if (key == "run.task")
        task_seen = true;
    }
  }

  if (task) {
    if (task_seen && config.task != *task)
      result.errors.push_back("run.task: config says '" + std::string(to_string(config.task)) +
                              "' but the command line asks for '" +
                              std::string(to_string(*task)) + "'");
    config.task = *task;
  } else if (!task_seen) {
    result.errors.insert(result.errors.begin(), "run.task: required (no task given)");
  }

  if (result.errors.empty()) {
    result.errors = check(config);
    if (result.errors.empty()) result.config = std::move(config);
  } else {
    for (auto& e : check(config)) result.errors.push_back(std::move(e));
  }
  return result;
}

std::string serialize_config(const RunConfig& config) {
  std::string out, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + ("[" + s + "]\n");
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.format(config) + "\n";
  }
  return out;
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out = "| key | default | description |\n|---|---|---|\n";
  for (const auto& f : fields()) {
    std::string value = f.key == "run.task" ? std::string("(required)") : f.format(defaults);
    out += "| `" + f.key + "` | `" + value + "` | " + f.doc + " |\n";
  }
  return out;
}

std::string apply_overrides(std::string_view text,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [key, value] : overrides) {
    if (key.find('.') == std::string::npos)
      throw ConfigError("override '" + key + "' must be section.key");
    tree.put(key, value);
  }
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

}  // namespace reidbench
