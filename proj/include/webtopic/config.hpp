#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "webtopic/chunker.hpp"
#include "webtopic/error.hpp"
#include "webtopic/fetch.hpp"
#include "webtopic/icl.hpp"
#include "webtopic/sampling.hpp"
#include "webtopic/scoring.hpp"
#include "webtopic/svm.hpp"

namespace webtopic {

/// Everything a pipeline run needs. Loaded from TOML; see README for the
/// schema. `seed` has no default.
struct PipelineConfig {
  std::string topic = "cannabis";
  std::uint64_t seed = 0;

  struct Paths {
    std::filesystem::path corpus = "work/corpus.jsonl";
    std::filesystem::path chunks = "work/chunks.jsonl";
    std::filesystem::path splits = "work/splits.jsonl";
    std::filesystem::path models = "work/models";
    std::filesystem::path predictions = "work/predictions";
    std::filesystem::path reports = "work/reports";
  } paths;

  struct Synthetic {
    std::vector<std::string> keywords = {"cannabis"};
    int n_pos = 50;
    int n_neg = 5000;
  } synthetic;

  FetchConfig fetch;
  ChunkerConfig chunker;
  SplitSpec split;

  SamplerKind sampler = SamplerKind::random;
  StratifiedConfig stratified;
  ClusterSamplerConfig cluster;

  struct Baseline {
    std::size_t max_features = 10000;
    SvmOptions svm;
    int lib_order = 4;
    FeatureMode feature_mode = FeatureMode::url_and_content;
  } baseline;

  struct Backend {
    std::string endpoint;
    std::size_t batch = 64;
    TrainConfig train;
  } backend;

  struct Icl {
    PromptConfig prompt;
    GenerationParams generation;
    int retries = 3;
  } icl;

  struct Eval {
    double threshold = 0.5;
    int bench_runs = 5;
  } eval;

  /// Negative selector for the train split, per the `sampler` setting.
  NegativeSelector train_selector() const {
    switch (sampler) {
      case SamplerKind::random: return random_selector(seed);
      case SamplerKind::stratified: return stratified_selector(stratified);
      case SamplerKind::cluster: return cluster_selector(cluster, seed);
    }
    return random_selector(seed);
  }
};

namespace detail {

inline std::string node_where(const toml::node& n, const std::string& key) {
  const auto& src = n.source();
  if (src.begin.line == 0) return "'" + key + "'";
  return "'" + key + "' (line " + std::to_string(src.begin.line) + ")";
}

inline std::int64_t toml_int(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<std::int64_t>()) return *v;
  throw ConfigError("config key " + node_where(n, key) + " must be an integer");
}

inline double toml_real(const toml::node& n, const std::string& key) {
  if (n.is_integer()) return static_cast<double>(*n.value_exact<std::int64_t>());
  if (auto v = n.value_exact<double>()) return *v;
  throw ConfigError("config key " + node_where(n, key) + " must be a number");
}

inline std::string toml_string(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError("config key " + node_where(n, key) + " must be a string");
}

inline bool toml_bool(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<bool>()) return *v;
  throw ConfigError("config key " + node_where(n, key) + " must be a boolean");
}

inline std::vector<std::string> toml_strings(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError("config key " + node_where(n, key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *arr) out.push_back(toml_string(e, key));
  return out;
}

inline int toml_int32(const toml::node& n, const std::string& key) {
  const auto v = toml_int(n, key);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("config key '" + key + "' out of range");
  return static_cast<int>(v);
}

inline std::uint64_t toml_uint(const toml::node& n, const std::string& key) {
  const auto v = toml_int(n, key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

using FieldSetter = std::function<void(PipelineConfig&, const toml::node&, const std::string&)>;

// Dotted key -> setter. Anything not listed is rejected.
inline const std::map<std::string, FieldSetter>& config_fields() {
  using C = PipelineConfig;
  using N = toml::node;
  using S = std::string;
  static const std::map<std::string, FieldSetter> f = {
      {"topic", [](C& c, const N& n, const S& k) { c.topic = toml_string(n, k); }},
      {"seed", [](C& c, const N& n, const S& k) { c.seed = toml_uint(n, k); }},
      {"paths.corpus", [](C& c, const N& n, const S& k) { c.paths.corpus = toml_string(n, k); }},
      {"paths.chunks", [](C& c, const N& n, const S& k) { c.paths.chunks = toml_string(n, k); }},
      {"paths.splits", [](C& c, const N& n, const S& k) { c.paths.splits = toml_string(n, k); }},
      {"paths.models", [](C& c, const N& n, const S& k) { c.paths.models = toml_string(n, k); }},
      {"paths.predictions", [](C& c, const N& n, const S& k) { c.paths.predictions = toml_string(n, k); }},
      {"paths.reports", [](C& c, const N& n, const S& k) { c.paths.reports = toml_string(n, k); }},
      {"synthetic.keywords", [](C& c, const N& n, const S& k) { c.synthetic.keywords = toml_strings(n, k); }},
      {"synthetic.n_pos", [](C& c, const N& n, const S& k) { c.synthetic.n_pos = toml_int32(n, k); }},
      {"synthetic.n_neg", [](C& c, const N& n, const S& k) { c.synthetic.n_neg = toml_int32(n, k); }},
      {"fetch.timeout_ms", [](C& c, const N& n, const S& k) { c.fetch.timeout = std::chrono::milliseconds(toml_int(n, k)); }},
      {"fetch.max_body", [](C& c, const N& n, const S& k) { c.fetch.max_body = toml_uint(n, k); }},
      {"fetch.user_agent", [](C& c, const N& n, const S& k) { c.fetch.user_agent = toml_string(n, k); }},
      {"fetch.max_redirects", [](C& c, const N& n, const S& k) { c.fetch.max_redirects = toml_int32(n, k); }},
      {"chunker.max_tokens", [](C& c, const N& n, const S& k) { c.chunker.max_tokens = toml_int32(n, k); }},
      {"chunker.overlap_tokens", [](C& c, const N& n, const S& k) { c.chunker.overlap_tokens = toml_int32(n, k); }},
      {"chunker.separators", [](C& c, const N& n, const S& k) { c.chunker.separators = toml_strings(n, k); }},
      {"split.train_pos_fraction", [](C& c, const N& n, const S& k) { c.split.train_pos_fraction = toml_real(n, k); }},
      {"split.augmented_to_train_only",
       [](C& c, const N& n, const S& k) { c.split.augmented_to_train_only = toml_bool(n, k); }},
      {"sampler.kind", [](C& c, const N& n, const S& k) { c.sampler = parse_sampler_kind(toml_string(n, k)); }},
      {"sampler.top_domains", [](C& c, const N& n, const S& k) { c.stratified.top_domains = toml_int32(n, k); }},
      {"sampler.tfidf_dim", [](C& c, const N& n, const S& k) { c.cluster.tfidf_dim = toml_int32(n, k); }},
      {"sampler.pca_dim", [](C& c, const N& n, const S& k) { c.cluster.pca_dim = toml_int32(n, k); }},
      {"sampler.dbscan_eps", [](C& c, const N& n, const S& k) { c.cluster.dbscan_eps = toml_real(n, k); }},
      {"sampler.dbscan_min_pts", [](C& c, const N& n, const S& k) { c.cluster.dbscan_min_pts = toml_int32(n, k); }},
      {"baseline.max_features", [](C& c, const N& n, const S& k) { c.baseline.max_features = toml_uint(n, k); }},
      {"baseline.svm_lambda", [](C& c, const N& n, const S& k) { c.baseline.svm.lambda = toml_real(n, k); }},
      {"baseline.svm_epochs", [](C& c, const N& n, const S& k) { c.baseline.svm.epochs = toml_int32(n, k); }},
      {"baseline.lib_order", [](C& c, const N& n, const S& k) { c.baseline.lib_order = toml_int32(n, k); }},
      {"baseline.feature_mode",
       [](C& c, const N& n, const S& k) { c.baseline.feature_mode = parse_feature_mode(toml_string(n, k)); }},
      {"backend.endpoint", [](C& c, const N& n, const S& k) { c.backend.endpoint = toml_string(n, k); }},
      {"backend.batch", [](C& c, const N& n, const S& k) { c.backend.batch = toml_uint(n, k); }},
      {"backend.learning_rate", [](C& c, const N& n, const S& k) { c.backend.train.learning_rate = toml_real(n, k); }},
      {"backend.max_epochs", [](C& c, const N& n, const S& k) { c.backend.train.max_epochs = toml_int32(n, k); }},
      {"backend.warmup_steps", [](C& c, const N& n, const S& k) { c.backend.train.warmup_steps = toml_int32(n, k); }},
      {"backend.weight_decay", [](C& c, const N& n, const S& k) { c.backend.train.weight_decay = toml_real(n, k); }},
      {"backend.max_seq_tokens",
       [](C& c, const N& n, const S& k) { c.backend.train.max_seq_tokens = toml_int32(n, k); }},
      {"backend.feature_mode",
       [](C& c, const N& n, const S& k) { c.backend.train.feature_mode = parse_feature_mode(toml_string(n, k)); }},
      {"icl.topic_description", [](C& c, const N& n, const S& k) { c.icl.prompt.topic_description = toml_string(n, k); }},
      {"icl.k", [](C& c, const N& n, const S& k) { c.icl.prompt.k_demonstrators = toml_int32(n, k); }},
      {"icl.sampling", [](C& c, const N& n, const S& k) { c.icl.prompt.sampling = parse_demo_sampling(toml_string(n, k)); }},
      {"icl.instruction", [](C& c, const N& n, const S& k) { c.icl.prompt.instruction = toml_string(n, k); }},
      {"icl.template", [](C& c, const N& n, const S& k) { c.icl.prompt.prompt_template = toml_string(n, k); }},
      {"icl.temperature", [](C& c, const N& n, const S& k) { c.icl.generation.temperature = toml_real(n, k); }},
      {"icl.top_k", [](C& c, const N& n, const S& k) { c.icl.generation.top_k = toml_int32(n, k); }},
      {"icl.top_p", [](C& c, const N& n, const S& k) { c.icl.generation.top_p = toml_real(n, k); }},
      {"icl.retries", [](C& c, const N& n, const S& k) { c.icl.retries = toml_int32(n, k); }},
      {"eval.threshold", [](C& c, const N& n, const S& k) { c.eval.threshold = toml_real(n, k); }},
      {"eval.bench_runs", [](C& c, const N& n, const S& k) { c.eval.bench_runs = toml_int32(n, k); }},
  };
  return f;
}

inline void collect_keys(const toml::table& t, const std::string& prefix,
                         std::vector<std::pair<std::string, const toml::node*>>& out) {
  for (const auto& [k, v] : t) {
    const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (const auto* sub = v.as_table(); sub && !config_fields().contains(key)) {
      collect_keys(*sub, key, out);
    } else {
      out.emplace_back(key, &v);
    }
  }
}

}  // namespace detail

/// Applies "section.key=value" on top of `root`. The value is read as a TOML
/// value when it parses as one (42, 0.5, true, "x", ["a"]), else as a bare string.
inline void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (!detail::config_fields().contains(key)) throw ConfigError("unknown config key '" + key + "'");

  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed = toml::table{{"v", value}};
  }
  toml::table* t = &root;
  std::string rest = key;
  for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    const std::string section = rest.substr(0, dot);
    rest = rest.substr(dot + 1);
    if (!t->contains(section)) t->insert(section, toml::table{});
    t = (*t)[section].as_table();
    if (!t) throw ConfigError("config key '" + section + "' is not a table");
  }
  parsed["v"].node()->visit([&](const auto& n) { t->insert_or_assign(rest, n); });
}

inline PipelineConfig config_from_toml(const toml::table& root) {
  PipelineConfig c;
  std::vector<std::pair<std::string, const toml::node*>> keys;
  detail::collect_keys(root, "", keys);
  bool has_seed = false;
  for (const auto& [key, node] : keys) {
    const auto it = detail::config_fields().find(key);
    if (it == detail::config_fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, *node, key);
    has_seed |= key == "seed";
  }
  if (!has_seed) throw ConfigError("config must set 'seed' (no default, so runs stay replayable)");
  c.split.seed = c.seed;
  c.stratified.seed = c.seed;
  c.baseline.svm.seed = c.seed;
  c.icl.prompt.seed = c.seed;
  if (c.backend.batch == 0) throw ConfigError("backend.batch must be >= 1");
  if (c.baseline.max_features == 0) throw ConfigError("baseline.max_features must be >= 1");
  if (!(c.eval.threshold > 0.0 && c.eval.threshold < 1.0)) throw ConfigError("eval.threshold must be in (0, 1)");
  if (c.eval.bench_runs < 1) throw ConfigError("eval.bench_runs must be >= 1");
  if (c.icl.retries < 0) throw ConfigError("icl.retries must be >= 0");
  validate(c.fetch);
  validate(c.chunker);
  validate(c.split);
  validate(c.stratified);
  validate(c.cluster);
  validate(c.backend.train);
  validate(c.icl.prompt);
  validate(c.icl.generation);
  if (c.baseline.lib_order < 1) throw ConfigError("baseline.lib_order must be >= 1");
  return c;
}

/// Reads `path` (if given), applies overrides in order, and validates.
inline PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                                  const std::vector<std::string>& overrides = {}) {
  toml::table root;
  if (path) {
    if (!std::filesystem::is_regular_file(*path)) throw ConfigError("cannot read config " + path->string());
    try {
      root = toml::parse_file(path->string());
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << path->string() << ":" << e.source().begin.line << ": " << e.description();
      throw ConfigError(msg.str());
    }
  }
  for (const auto& o : overrides) apply_override(root, o);
  return config_from_toml(root);
}

}  // namespace webtopic
