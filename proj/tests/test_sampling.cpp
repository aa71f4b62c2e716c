#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "webtopic/sampling.hpp"

#include "support/temp_dir.hpp"

using namespace webtopic;

namespace {

// Hamilton apportionment computed with rationals scaled to integers, no caps
// needed when every stratum is large.
std::vector<std::size_t> oracle_hamilton(const std::vector<std::size_t>& sizes, std::size_t k) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<std::size_t> out(sizes.size());
  std::vector<std::pair<std::size_t, std::size_t>> rem;  // (remainder, index)
  std::size_t used = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out[i] = k * sizes[i] / total;
    used += out[i];
    rem.emplace_back(k * sizes[i] % total, i);
  }
  std::stable_sort(rem.begin(), rem.end(), [&](auto a, auto b) {
    return a.first != b.first ? a.first > b.first : sizes[a.second] > sizes[b.second];
  });
  for (std::size_t j = 0; used < k; ++j, ++used) ++out[rem[j].second];
  return out;
}

WebPage neg(const std::string& id, const std::string& host, const std::string& text = "x") {
  WebPage p;
  p.id = id;
  p.url = "https://" + host + "/" + id;
  p.html = "<p>" + text + "</p>";
  p.text = text;
  p.label = Label::negative;
  return p;
}

WebPage pos(const std::string& id) {
  auto p = neg(id, "pos.de", "topic");
  p.label = Label::positive;
  return p;
}

std::set<std::string> ids(const std::vector<WebPage>& pages) {
  std::set<std::string> out;
  for (const auto& p : pages) out.insert(p.id);
  return out;
}

std::vector<WebPage> numbered_negatives(std::size_t n) {
  std::vector<WebPage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(neg("n" + std::to_string(i), "h" + std::to_string(i % 7) + ".de"));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Allocation

TEST(Allocation, MatchesHamiltonOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::size_t> sizes(1 + rng.below(8));
    for (auto& s : sizes) s = 50 + rng.below(100);
    const std::size_t k = 2 + rng.below(40);
    auto expected = oracle_hamilton(sizes, k);
    EXPECT_EQ(allocate_proportional(sizes, k), expected);
  }
}

TEST(Allocation, CapsAndDiversity) {
  // 90% in one stratum
  EXPECT_EQ(allocate_proportional({90, 10}, 2), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(allocate_proportional({90, 10}, 10), (std::vector<std::size_t>{9, 1}));
  EXPECT_EQ(allocate_proportional({3, 0, 1}, 4), (std::vector<std::size_t>{3, 0, 1}));
  EXPECT_EQ(allocate_proportional({1, 1, 100}, 3), (std::vector<std::size_t>{1, 0, 2}));  // tie: earlier stratum
  EXPECT_EQ(allocate_proportional({5}, 0), (std::vector<std::size_t>{0}));
  EXPECT_THROW(allocate_proportional({1, 1}, 3), InputError);
}

TEST(Allocation, PropertySumCapShare) {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::size_t> sizes(1 + rng.below(6));
    std::size_t total = 0;
    for (auto& s : sizes) total += (s = rng.below(2) ? rng.below(5) : rng.below(200));
    if (total == 0) continue;
    const std::size_t k = rng.below(total + 1);
    const auto c = allocate_proportional(sizes, k);
    std::size_t sum = 0, used = 0, nonempty = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      sum += c[i];
      ASSERT_LE(c[i], sizes[i]);
      const double share = static_cast<double>(sizes[i]) / static_cast<double>(total);
      ASSERT_LE(static_cast<double>(c[i]), std::ceil(static_cast<double>(k) * share) + 1);
      used += c[i] > 0;
      nonempty += sizes[i] > 0;
    }
    ASSERT_EQ(sum, k);
    if (k >= 2 && nonempty >= 2) ASSERT_GE(used, 2u);
  }
}

// ---------------------------------------------------------------------------
// Samplers

TEST(RandomSampler, Basics) {
  const auto n = numbered_negatives(20);
  const std::span<const WebPage> s(n);
  EXPECT_EQ(ids(sample_negatives_random(s, 20, 1)), ids(n));
  EXPECT_TRUE(sample_negatives_random(s, 0, 1).empty());
  EXPECT_EQ(sample_negatives_random(s, 7, 5), sample_negatives_random(s, 7, 5));
  EXPECT_NE(sample_negatives_random(s, 7, 5), sample_negatives_random(s, 7, 6));
  EXPECT_THROW(sample_negatives_random(s, 21, 1), InputError);
}

TEST(RandomSampler, RoughlyUniform) {
  std::vector<int> hits(10, 0);
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    for (auto i : select_random(10, 3, seed)) ++hits[i];
  }
  for (int h : hits) EXPECT_NEAR(h, 1500, 150);
}

TEST(StratifiedSampler, DominantDomainDoesNotSwampSelection) {
  std::vector<WebPage> n;
  for (int i = 0; i < 90; ++i) n.push_back(neg("big" + std::to_string(i), "big.de"));
  for (int i = 0; i < 10; ++i) n.push_back(neg("s" + std::to_string(i), "small" + std::to_string(i) + ".de"));
  StratifiedConfig cfg;
  cfg.top_domains = 1;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    const auto pick = sample_negatives_stratified(std::span<const WebPage>(n), 2, cfg);
    std::set<std::string> hosts;
    for (const auto& p : pick) hosts.insert(host_key(p.url));
    EXPECT_GE(hosts.size(), 2u);
  }
}

TEST(StratifiedSampler, SingleDomainEqualsRandom) {
  std::vector<WebPage> n;
  for (int i = 0; i < 30; ++i) n.push_back(neg("p" + std::to_string(i), "only.de"));
  StratifiedConfig cfg;
  cfg.seed = 17;
  EXPECT_EQ(sample_negatives_stratified(std::span<const WebPage>(n), 9, cfg),
            sample_negatives_random(std::span<const WebPage>(n), 9, 17));
}

TEST(StratifiedSampler, TopDomainsPlusOthers) {
  std::vector<std::string> keys;
  for (int i = 0; i < 129; ++i) keys.push_back("d" + std::to_string(i) + ".de");
  const auto strata = domain_strata(keys, 128);
  ASSERT_EQ(strata.size(), 129u);
  for (const auto& s : strata) EXPECT_EQ(s.size(), 1u);

  keys = {"a", "b", "a", "c", "a", "b", "d"};
  const auto s2 = domain_strata(keys, 2);
  ASSERT_EQ(s2.size(), 3u);
  EXPECT_EQ(s2[0], (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(s2[1], (std::vector<std::size_t>{1, 5}));
  EXPECT_EQ(s2[2], (std::vector<std::size_t>{3, 6}));
}

TEST(ClusterSampler, SeparatedClustersGiveOneEach) {
  std::vector<WebPage> n;
  for (int i = 0; i < 8; ++i) n.push_back(neg("a" + std::to_string(i), "x.de", "fußball tor spiel liga"));
  for (int i = 0; i < 8; ++i) n.push_back(neg("b" + std::to_string(i), "y.de", "rezept kuchen backen zucker"));
  ClusterSamplerConfig cfg;
  cfg.pca_dim = 2;
  const auto labels = cluster_texts({n[0].text.value(), n[8].text.value()}, cfg, 1);
  EXPECT_EQ(labels.size(), 2u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pick = sample_negatives_cluster(std::span<const WebPage>(n), 2, cfg, seed);
    ASSERT_EQ(pick.size(), 2u);
    EXPECT_NE(pick[0].id[0], pick[1].id[0]) << pick[0].id << " " << pick[1].id;
  }
}

TEST(ClusterSampler, IdenticalTextsEqualRandom) {
  std::vector<WebPage> n;
  for (int i = 0; i < 12; ++i) n.push_back(neg("p" + std::to_string(i), "h.de", "same words here"));
  const std::span<const WebPage> s(n);
  EXPECT_EQ(sample_negatives_cluster(s, 5, {}, 3), sample_negatives_random(s, 5, 3));
  EXPECT_EQ(ids(sample_negatives_cluster(s, 12, {}, 3)), ids(n));
}

TEST(ClusterSampler, EmptyTextsDoNotBreakPipeline) {
  std::vector<WebPage> n;
  for (int i = 0; i < 6; ++i) n.push_back(neg("p" + std::to_string(i), "h.de", ""));
  EXPECT_EQ(sample_negatives_cluster(std::span<const WebPage>(n), 3, {}, 3).size(), 3u);
}

TEST(ClusterSampler, ConfigValidated) {
  ClusterSamplerConfig cfg;
  cfg.pca_dim = cfg.tfidf_dim + 1;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.dbscan_eps = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Samplers, ExactlyKDistinctFromInputDeterministic) {
  Rng rng(30);
  const std::vector<std::string> vocab = {"auto", "haus", "baum", "wasser", "sonne", "regen"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<WebPage> n;
    const auto size = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < size; ++i) {
      std::string text;
      for (int w = 0; w < 4; ++w) text += vocab[rng.below(vocab.size())] + " ";
      n.push_back(neg("p" + std::to_string(i), "h" + std::to_string(rng.below(5)) + ".de", text));
    }
    const std::span<const WebPage> s(n);
    const auto k = rng.below(size + 1);
    ClusterSamplerConfig ccfg;
    ccfg.dbscan_min_pts = 2;
    StratifiedConfig scfg;
    scfg.top_domains = 3;
    scfg.seed = static_cast<std::uint64_t>(trial);
    const std::vector<std::vector<WebPage>> picks = {
        sample_negatives_random(s, k, static_cast<std::uint64_t>(trial)),
        sample_negatives_stratified(s, k, scfg),
        sample_negatives_cluster(s, k, ccfg, static_cast<std::uint64_t>(trial))};
    for (const auto& p : picks) {
      ASSERT_EQ(p.size(), k);
      const auto got = ids(p);
      EXPECT_EQ(got.size(), k);
      for (const auto& id : got) EXPECT_TRUE(ids(n).contains(id));
    }
    EXPECT_EQ(sample_negatives_stratified(s, k, scfg), picks[1]);
    EXPECT_EQ(sample_negatives_cluster(s, k, ccfg, static_cast<std::uint64_t>(trial)), picks[2]);
  }
}

// ---------------------------------------------------------------------------
// Splits

TEST(Splits, TenAndTen) {
  std::vector<WebPage> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(pos("p" + std::to_string(i)));
  for (int i = 0; i < 10; ++i) corpus.push_back(neg("n" + std::to_string(i), "h.de"));
  SplitSpec spec;
  spec.seed = 4;
  const auto s = build_splits(corpus, spec);
  EXPECT_EQ(s.at("train").n_pos, 9);
  EXPECT_EQ(s.at("train").n_neg, 9);
  EXPECT_EQ(s.at("test").n_pos, 1);
  EXPECT_EQ(s.at("test").n_neg, 1);
  EXPECT_EQ(s.at("unbl").page_ids.size(), 0u);
  EXPECT_EQ(s.at("extd").page_ids.size(), 0u);
}

TEST(Splits, PaperScaleChildrenTopic) {
  // 214 high-confidence positives, 3914 negatives
  std::vector<WebPage> corpus;
  for (int i = 0; i < 214; ++i) corpus.push_back(pos("p" + std::to_string(i)));
  for (int i = 0; i < 3914; ++i) corpus.push_back(neg("n" + std::to_string(i), "h.de"));
  SplitSpec spec;
  spec.seed = 1;
  const auto s = build_splits(corpus, spec);
  EXPECT_EQ(s.at("train").n_pos, 192);
  EXPECT_EQ(s.at("train").page_ids.size(), 384u);
  EXPECT_EQ(s.at("test").n_pos, 22);
  EXPECT_EQ(s.at("test").page_ids.size(), 44u);
  const auto unbalanced = unbalanced_eval_ids(s, corpus);
  EXPECT_EQ(unbalanced.size(), 3722u);
  EXPECT_EQ(std::count_if(unbalanced.begin(), unbalanced.end(), [](const std::string& id) { return id[0] == 'p'; }), 22);
}

TEST(Splits, LowConfidenceOnlyIsError) {
  std::vector<WebPage> corpus = {pos("p1"), neg("n1", "h.de")};
  for (auto& p : corpus) p.confidence = Confidence::low;
  EXPECT_THROW(build_splits(corpus, {}), InputError);
}

TEST(Splits, AugmentedGoToTrainAndLowToExtd) {
  std::vector<WebPage> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(pos("p" + std::to_string(i)));
  for (int i = 0; i < 5; ++i) {
    auto a = pos("aug" + std::to_string(i));
    a.source = Source::augmented;
    corpus.push_back(a);
  }
  for (int i = 0; i < 40; ++i) corpus.push_back(neg("n" + std::to_string(i), "h.de"));
  for (int i = 0; i < 6; ++i) {
    auto l = i % 2 ? pos("lp" + std::to_string(i)) : neg("ln" + std::to_string(i), "l.de");
    l.confidence = Confidence::low;
    corpus.push_back(l);
  }
  SplitSpec spec;
  spec.seed = 9;
  const auto s = build_splits(corpus, spec);
  const auto& train = s.at("train").page_ids;
  for (int i = 0; i < 5; ++i) {
    EXPECT_NE(std::find(train.begin(), train.end(), "aug" + std::to_string(i)), train.end());
  }
  // 15 positives: floor(13.5) = 13 train, 2 test
  EXPECT_EQ(s.at("train").n_pos, 13);
  EXPECT_EQ(s.at("test").n_pos, 2);
  EXPECT_EQ(s.at("train").n_neg, 13);
  EXPECT_EQ(s.at("test").n_neg, 2);
  EXPECT_EQ(s.at("extd").page_ids.size(), 6u);
  for (const auto& id : s.at("extd").page_ids) EXPECT_EQ(id[0], 'l');
}

TEST(Splits, PartitionPropertyAndConfidenceRules) {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<WebPage> corpus;
    const auto n_pos = 1 + rng.below(30);
    for (std::uint64_t i = 0; i < n_pos; ++i) corpus.push_back(pos("p" + std::to_string(i)));
    const auto n_neg = n_pos + rng.below(100);
    for (std::uint64_t i = 0; i < n_neg; ++i) corpus.push_back(neg("n" + std::to_string(i), "h" + std::to_string(i % 4) + ".de"));
    for (std::uint64_t i = 0, m = rng.below(10); i < m; ++i) {
      auto l = neg("l" + std::to_string(i), "l.de");
      l.confidence = Confidence::low;
      corpus.push_back(l);
    }
    SplitSpec spec;
    spec.seed = static_cast<std::uint64_t>(trial);
    const std::vector<NegativeSelector> selectors = {
        {}, stratified_selector({2, spec.seed}), cluster_selector({}, spec.seed)};
    for (const auto& sel : selectors) {
      const auto s = build_splits(corpus, spec, sel);
      std::multiset<std::string> all;
      std::map<std::string, const WebPage*> by_id;
      for (const auto& p : corpus) by_id[p.id] = &p;
      for (const auto& [name, split] : s) {
        EXPECT_EQ(static_cast<std::size_t>(split.n_pos + split.n_neg), split.page_ids.size());
        for (const auto& id : split.page_ids) {
          all.insert(id);
          EXPECT_EQ(by_id.at(id)->confidence == Confidence::low, name == "extd");
        }
      }
      EXPECT_EQ(all.size(), corpus.size());
      EXPECT_EQ(std::set<std::string>(all.begin(), all.end()).size(), corpus.size());
      EXPECT_EQ(s.at("train").n_pos, s.at("train").n_neg);
      EXPECT_EQ(s.at("test").n_pos, s.at("test").n_neg);
      EXPECT_EQ(s, build_splits(corpus, spec, sel));
    }
  }
}

TEST(Splits, ManifestRoundTrip) {
  test::TempDir dir;
  std::vector<WebPage> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(pos("p" + std::to_string(i)));
  for (int i = 0; i < 30; ++i) corpus.push_back(neg("n" + std::to_string(i), "h.de"));
  SplitSpec spec;
  spec.seed = 2;
  const auto s = build_splits(corpus, spec);
  save_manifest(s, dir / "splits.jsonl");
  EXPECT_EQ(load_manifest(dir / "splits.jsonl", corpus), s);
  io::atomic_write_string(dir / "bad.jsonl", "{\"page_id\":\"p1\",\"split\":\"nope\"}\n");
  EXPECT_THROW(load_manifest(dir / "bad.jsonl", corpus), InputError);
}
