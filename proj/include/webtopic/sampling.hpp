#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/dbscan.hpp"
#include "webtopic/error.hpp"
#include "webtopic/io.hpp"
#include "webtopic/pca.hpp"
#include "webtopic/random.hpp"
#include "webtopic/tfidf.hpp"
#include "webtopic/url.hpp"

namespace webtopic {

// ---------------------------------------------------------------------------
// Allocation

/// Splits `k` draws across strata of the given sizes in proportion to their
/// size (largest-remainder rounding, no stratum above its size). When k >= 2
/// and at least two strata are non-empty, the draw never comes from a single
/// stratum: if rounding gives everything to one, a unit moves to the
/// non-empty stratum with the largest quota.
inline std::vector<std::size_t> allocate_proportional(const std::vector<std::size_t>& sizes,
                                                      std::size_t k) {
  std::uint64_t total = 0;
  for (auto s : sizes) total += s;
  if (k > total) {
    throw InputError("cannot draw " + std::to_string(k) + " items from " + std::to_string(total));
  }
  std::vector<std::size_t> counts(sizes.size(), 0);
  if (k == 0) return counts;

  std::vector<std::uint64_t> rem(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(k) * sizes[i];
    counts[i] = static_cast<std::size_t>(num / total);
    rem[i] = num % total;
    assigned += counts[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return sizes[a] > sizes[b];
  });
  while (assigned < k) {
    bool progressed = false;
    for (std::size_t i : order) {
      if (assigned == k) break;
      if (counts[i] < sizes[i]) {
        ++counts[i];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) throw InvariantError("allocation could not place all draws");
  }

  const auto nonempty = std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; });
  const auto used = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (k >= 2 && nonempty >= 2 && used == 1) {
    const auto donor = static_cast<std::size_t>(
        std::find_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) - counts.begin());
    std::size_t best = sizes.size();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (i == donor || sizes[i] == 0) continue;
      if (best == sizes.size() || sizes[i] > sizes[best]) best = i;
    }
    --counts[donor];
    ++counts[best];
  }
  return counts;
}

namespace detail {

// Draws counts[s] items from each stratum with one generator consumed in
// stratum order. Returns indices into the original item list.
inline std::vector<std::size_t> draw_from_strata(const std::vector<std::vector<std::size_t>>& strata,
                                                 const std::vector<std::size_t>& counts,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    if (counts[s] == 0) continue;
    for (std::size_t local : rng.sample_indices(strata[s].size(), counts[s])) {
      out.push_back(strata[s][local]);
    }
  }
  return out;
}

inline std::vector<std::size_t> draw_stratified(const std::vector<std::vector<std::size_t>>& strata,
                                                std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> sizes;
  sizes.reserve(strata.size());
  for (const auto& s : strata) sizes.push_back(s.size());
  return draw_from_strata(strata, allocate_proportional(sizes, k), seed);
}

template <class T>
std::vector<T> pick(std::span<const T> items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random

inline std::vector<std::size_t> select_random(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) {
    throw InputError("cannot sample " + std::to_string(k) + " negatives from " + std::to_string(n));
  }
  Rng rng(seed);
  return rng.sample_indices(n, k);
}

/// Uniform sample without replacement.
template <class T>
std::vector<T> sample_negatives_random(std::span<const T> negatives, std::size_t k,
                                       std::uint64_t seed) {
  return detail::pick(negatives, select_random(negatives.size(), k, seed));
}

// ---------------------------------------------------------------------------
// Stratified by domain

struct StratifiedConfig {
  int top_domains = 128;
  std::uint64_t seed = 0;
};

inline void validate(const StratifiedConfig& cfg) {
  if (cfg.top_domains < 1) throw ConfigError("stratified top_domains must be >= 1");
}

/// The top_domains most frequent keys each form a stratum (ranked by count,
/// then key); everything else is pooled into one trailing "others" stratum.
/// Items keep their input order inside a stratum.
inline std::vector<std::vector<std::size_t>> domain_strata(const std::vector<std::string>& keys,
                                                           int top_domains) {
  std::map<std::string, std::size_t> counts;
  for (const auto& k : keys) ++counts[k];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::unordered_map<std::string, std::size_t> stratum_of;
  const std::size_t n_top = std::min(ranked.size(), static_cast<std::size_t>(top_domains));
  for (std::size_t i = 0; i < n_top; ++i) stratum_of.emplace(ranked[i].first, i);

  std::vector<std::vector<std::size_t>> strata(n_top + 1);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto it = stratum_of.find(keys[i]);
    strata[it == stratum_of.end() ? n_top : it->second].push_back(i);
  }
  return strata;
}

inline std::string host_key(const std::string& url) {
  try {
    return parse_url(url).host;
  } catch (const InputError&) {
    return url;
  }
}

inline std::vector<std::size_t> select_stratified(const std::vector<std::string>& keys,
                                                  std::size_t k, const StratifiedConfig& cfg) {
  validate(cfg);
  if (k > keys.size()) {
    throw InputError("cannot sample " + std::to_string(k) + " negatives from " +
                     std::to_string(keys.size()));
  }
  return detail::draw_stratified(domain_strata(keys, cfg.top_domains), k, cfg.seed);
}

template <class T, class KeyFn>
std::vector<T> sample_negatives_stratified(std::span<const T> negatives, std::size_t k,
                                           const StratifiedConfig& cfg, KeyFn domain_of) {
  std::vector<std::string> keys;
  keys.reserve(negatives.size());
  for (const auto& item : negatives) keys.push_back(domain_of(item));
  return detail::pick(negatives, select_stratified(keys, k, cfg));
}

inline std::vector<WebPage> sample_negatives_stratified(std::span<const WebPage> negatives,
                                                        std::size_t k,
                                                        const StratifiedConfig& cfg) {
  return sample_negatives_stratified(negatives, k, cfg,
                                     [](const WebPage& p) { return host_key(p.url); });
}

// ---------------------------------------------------------------------------
// Cluster-based

struct ClusterSamplerConfig {
  int tfidf_dim = 10000;
  int pca_dim = 100;
  double dbscan_eps = 0.5;
  int dbscan_min_pts = 5;
};

inline void validate(const ClusterSamplerConfig& cfg) {
  if (cfg.tfidf_dim < 1) throw ConfigError("cluster tfidf_dim must be >= 1");
  if (cfg.pca_dim < 1 || cfg.pca_dim > cfg.tfidf_dim) {
    throw ConfigError("cluster pca_dim must be in [1, tfidf_dim]");
  }
  if (!(cfg.dbscan_eps > 0.0)) throw ConfigError("cluster dbscan_eps must be > 0");
  if (cfg.dbscan_min_pts < 1) throw ConfigError("cluster dbscan_min_pts must be >= 1");
}

/// TF-IDF, then PCA, then DBSCAN. Returns one label per text (kNoise for
/// noise). PCA keeps min(pca_dim, n_texts, vocabulary) components.
inline std::vector<int> cluster_texts(const std::vector<std::string>& texts,
                                      const ClusterSamplerConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (texts.empty()) return {};
  TfidfVectorizer vec(static_cast<std::size_t>(cfg.tfidf_dim));
  bool any_terms = false;
  for (const auto& t : texts) {
    if (!analyze(t).empty()) {
      any_terms = true;
      break;
    }
  }
  Eigen::MatrixXd reduced;
  if (any_terms) {
    vec.fit(texts);
    const auto x = vec.transform_matrix(texts);
    const Eigen::Index dim = std::min<Eigen::Index>(
        {static_cast<Eigen::Index>(cfg.pca_dim), x.rows(), x.cols()});
    PcaOptions opt;
    opt.seed = seed;
    reduced = pca_reduce(x, dim, opt);
  } else {
    reduced = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(texts.size()), 1);
  }
  return dbscan(reduced, cfg.dbscan_eps, cfg.dbscan_min_pts);
}

/// Clusters in id order followed by the noise group.
inline std::vector<std::vector<std::size_t>> cluster_strata(const std::vector<int>& labels) {
  int max_id = -1;
  for (int l : labels) max_id = std::max(max_id, l);
  std::vector<std::vector<std::size_t>> strata(static_cast<std::size_t>(max_id + 2));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    strata[l == kNoise ? strata.size() - 1 : static_cast<std::size_t>(l)].push_back(i);
  }
  return strata;
}

inline std::vector<std::size_t> select_cluster(const std::vector<std::string>& texts,
                                               std::size_t k, const ClusterSamplerConfig& cfg,
                                               std::uint64_t seed) {
  if (k > texts.size()) {
    throw InputError("cannot sample " + std::to_string(k) + " negatives from " +
                     std::to_string(texts.size()));
  }
  if (k == 0) return {};
  return detail::draw_stratified(cluster_strata(cluster_texts(texts, cfg, seed)), k, seed);
}

template <class T, class TextFn>
std::vector<T> sample_negatives_cluster(std::span<const T> negatives, std::size_t k,
                                        const ClusterSamplerConfig& cfg, std::uint64_t seed,
                                        TextFn text_of) {
  std::vector<std::string> texts;
  texts.reserve(negatives.size());
  for (const auto& item : negatives) texts.emplace_back(text_of(item));
  return detail::pick(negatives, select_cluster(texts, k, cfg, seed));
}

inline std::vector<WebPage> sample_negatives_cluster(std::span<const WebPage> negatives,
                                                     std::size_t k,
                                                     const ClusterSamplerConfig& cfg,
                                                     std::uint64_t seed) {
  return sample_negatives_cluster(negatives, k, cfg, seed,
                                  [](const WebPage& p) { return p.text.value_or(""); });
}

// ---------------------------------------------------------------------------
// Train / test splits

enum class SamplerKind { random, stratified, cluster };

inline std::string_view to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::random: return "random";
    case SamplerKind::stratified: return "stratified";
    case SamplerKind::cluster: return "cluster";
  }
  return "random";
}

inline SamplerKind parse_sampler_kind(std::string_view s) {
  if (s == "random") return SamplerKind::random;
  if (s == "stratified") return SamplerKind::stratified;
  if (s == "cluster") return SamplerKind::cluster;
  throw ConfigError("unknown sampler '" + std::string(s) + "'");
}

/// Picks k of the candidate negatives; returns indices into `candidates`.
using NegativeSelector =
    std::function<std::vector<std::size_t>(const std::vector<const WebPage*>& candidates,
                                           std::size_t k)>;

inline NegativeSelector random_selector(std::uint64_t seed) {
  return [seed](const std::vector<const WebPage*>& c, std::size_t k) {
    return select_random(c.size(), k, seed);
  };
}

inline NegativeSelector stratified_selector(StratifiedConfig cfg) {
  return [cfg](const std::vector<const WebPage*>& c, std::size_t k) {
    std::vector<std::string> keys;
    keys.reserve(c.size());
    for (const auto* p : c) keys.push_back(host_key(p->url));
    return select_stratified(keys, k, cfg);
  };
}

inline NegativeSelector cluster_selector(ClusterSamplerConfig cfg, std::uint64_t seed) {
  return [cfg, seed](const std::vector<const WebPage*>& c, std::size_t k) {
    std::vector<std::string> texts;
    texts.reserve(c.size());
    for (const auto* p : c) texts.push_back(p->text.value_or(""));
    return select_cluster(texts, k, cfg, seed);
  };
}

struct SplitSpec {
  double train_pos_fraction = 0.9;
  std::uint64_t seed = 0;
  bool augmented_to_train_only = true;
};

inline void validate(const SplitSpec& s) {
  if (!(s.train_pos_fraction > 0.0 && s.train_pos_fraction < 1.0)) {
    throw ConfigError("train_pos_fraction must be in (0, 1)");
  }
}

struct DatasetSplit {
  std::string name;  // train, test, unbl, extd
  std::vector<std::string> page_ids;
  int n_pos = 0;
  int n_neg = 0;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"train", "test", "unbl", "extd"};
  return names;
}

using SplitMap = std::map<std::string, DatasetSplit>;

/// Partitions a corpus into train / balanced test / unbalanced rest / extended.
///
/// High-confidence positives go 90/10 (by default) to train and test after a
/// seeded shuffle, with train taking floor(fraction * n); augmented positives
/// only ever land in train. Train and test then receive as many high-confidence
/// negatives as they have positives, train's chosen by `train_negatives` and
/// test's uniformly from the rest. Leftover high-confidence negatives form
/// unbl; every low-confidence page goes to extd. Each page lands in exactly
/// one split.
inline SplitMap build_splits(const std::vector<WebPage>& corpus, const SplitSpec& spec,
                             const NegativeSelector& train_negatives = {}) {
  validate(spec);
  std::vector<const WebPage*> regular_pos, augmented_pos, negatives, low;
  for (const auto& p : corpus) {
    if (p.confidence == Confidence::low) {
      low.push_back(&p);
    } else if (p.label == Label::positive) {
      (spec.augmented_to_train_only && p.source == Source::augmented ? augmented_pos
                                                                     : regular_pos)
          .push_back(&p);
    } else {
      negatives.push_back(&p);
    }
  }
  const std::size_t n_pos = regular_pos.size() + augmented_pos.size();
  if (n_pos == 0) throw InputError("corpus has no high-confidence positive pages");

  Rng rng(spec.seed);
  rng.shuffle(regular_pos);
  const auto n_train_target = static_cast<std::size_t>(
      std::floor(spec.train_pos_fraction * static_cast<double>(n_pos) + 1e-9));
  const std::size_t n_test = std::min(regular_pos.size(), n_pos - n_train_target);

  std::vector<const WebPage*> test_pos(regular_pos.begin(),
                                       regular_pos.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<const WebPage*> train_pos(regular_pos.begin() + static_cast<std::ptrdiff_t>(n_test),
                                        regular_pos.end());
  train_pos.insert(train_pos.end(), augmented_pos.begin(), augmented_pos.end());

  if (negatives.size() < train_pos.size() + test_pos.size()) {
    throw InputError("need " + std::to_string(train_pos.size() + test_pos.size()) +
                     " high-confidence negatives for balanced splits, corpus has " +
                     std::to_string(negatives.size()));
  }
  const NegativeSelector select = train_negatives ? train_negatives : random_selector(spec.seed);
  const auto train_neg_idx = select(negatives, train_pos.size());
  std::vector<bool> taken(negatives.size(), false);
  for (auto i : train_neg_idx) {
    if (i >= negatives.size() || taken[i]) throw InvariantError("negative selector returned bad index");
    taken[i] = true;
  }
  if (train_neg_idx.size() != train_pos.size()) {
    throw InvariantError("negative selector returned wrong count");
  }
  std::vector<const WebPage*> rest;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    if (!taken[i]) rest.push_back(negatives[i]);
  }
  std::vector<bool> in_test(rest.size(), false);
  for (auto i : rng.sample_indices(rest.size(), test_pos.size())) in_test[i] = true;

  std::unordered_map<const WebPage*, std::string> assignment;
  for (auto* p : train_pos) assignment[p] = "train";
  for (auto i : train_neg_idx) assignment[negatives[i]] = "train";
  for (auto* p : test_pos) assignment[p] = "test";
  for (std::size_t i = 0; i < rest.size(); ++i) assignment[rest[i]] = in_test[i] ? "test" : "unbl";
  for (auto* p : low) assignment[p] = "extd";

  SplitMap splits;
  for (const auto& name : split_names()) splits[name].name = name;
  for (const auto& p : corpus) {
    auto& s = splits.at(assignment.at(&p));
    s.page_ids.push_back(p.id);
    (p.label == Label::positive ? s.n_pos : s.n_neg) += 1;
  }
  return splits;
}

/// Evaluation view mirroring the unbalanced test set: the held-out test
/// positives plus every unbl page.
inline std::vector<std::string> unbalanced_eval_ids(const SplitMap& splits,
                                                    const std::vector<WebPage>& corpus) {
  std::unordered_set<std::string> positives;
  for (const auto& p : corpus) {
    if (p.label == Label::positive) positives.insert(p.id);
  }
  std::vector<std::string> out;
  for (const auto& id : splits.at("test").page_ids) {
    if (positives.contains(id)) out.push_back(id);
  }
  const auto& unbl = splits.at("unbl").page_ids;
  out.insert(out.end(), unbl.begin(), unbl.end());
  return out;
}

/// Manifest: one {"page_id", "split"} object per line, splits in canonical order.
inline void save_manifest(const SplitMap& splits, const std::filesystem::path& path) {
  io::atomic_write(path, [&](std::ostream& out) {
    for (const auto& name : split_names()) {
      const auto it = splits.find(name);
      if (it == splits.end()) continue;
      for (const auto& id : it->second.page_ids) {
        out << json{{"page_id", id}, {"split", name}}.dump() << '\n';
      }
    }
  });
}

/// Reads a manifest; class counts are recomputed from the corpus labels.
inline SplitMap load_manifest(const std::filesystem::path& path,
                              const std::vector<WebPage>& corpus) {
  std::unordered_map<std::string, Label> labels;
  for (const auto& p : corpus) labels.emplace(p.id, p.label);
  SplitMap splits;
  for (const auto& name : split_names()) splits[name].name = name;
  io::for_each_jsonl(path, [&](const json& j, std::size_t line) {
    const auto id = j.at("page_id").get<std::string>();
    const auto name = j.at("split").get<std::string>();
    const auto it = splits.find(name);
    if (it == splits.end()) {
      throw InputError(path.string() + ":" + std::to_string(line) + ": unknown split '" + name + "'");
    }
    const auto lab = labels.find(id);
    if (lab == labels.end()) {
      throw InputError(path.string() + ":" + std::to_string(line) + ": page '" + id +
                       "' not in corpus");
    }
    it->second.page_ids.push_back(id);
    (lab->second == Label::positive ? it->second.n_pos : it->second.n_neg) += 1;
  });
  return splits;
}

}  // namespace webtopic
