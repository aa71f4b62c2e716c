#include <gtest/gtest.h>

#include <set>

#include "support/temp_dir.hpp"
#include "webtopic/eval.hpp"
#include "webtopic/icl.hpp"
#include "webtopic/mock_backend.hpp"

using namespace webtopic;

namespace {

std::vector<Demonstrator> pool(int pos, int neg) {
  std::vector<Demonstrator> out;
  for (int i = 0; i < pos; ++i) out.push_back({"cannabis text " + std::to_string(i), Label::positive});
  for (int i = 0; i < neg; ++i) out.push_back({"other text " + std::to_string(i), Label::negative});
  return out;
}

std::vector<Chunk> synthetic_chunks(int pos, int neg, std::uint64_t seed) {
  std::vector<Chunk> out;
  for (const auto& page : gen_synthetic_corpus({"cannabis"}, pos, neg, seed)) {
    for (auto& c : chunk_page(page, ChunkerConfig{})) out.push_back(std::move(c));
  }
  return out;
}

// Random vectors as "embeddings", looked up by text.
struct TableEmbed {
  std::map<std::string, std::vector<double>> table;
  std::vector<std::vector<double>> operator()(const std::vector<std::string>& texts) const {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(table.at(t));
    return out;
  }
};

}  // namespace

TEST(ParseAnswer, Examples) {
  EXPECT_EQ(parse_answer("Yes, this page covers the law.").value, ParsedAnswer::Value::positive);
  EXPECT_EQ(parse_answer("NO").value, ParsedAnswer::Value::negative);
  EXPECT_EQ(parse_answer("It depends.").value, ParsedAnswer::Value::unparseable);
  EXPECT_EQ(parse_answer("  \n**Yes**").value, ParsedAnswer::Value::positive);
  EXPECT_EQ(parse_answer("1. no").value, ParsedAnswer::Value::negative);
  EXPECT_EQ(parse_answer("yesterday").value, ParsedAnswer::Value::unparseable);
  EXPECT_EQ(parse_answer("not sure").value, ParsedAnswer::Value::unparseable);
  EXPECT_EQ(parse_answer("").value, ParsedAnswer::Value::unparseable);
  EXPECT_EQ(parse_answer("Yes").raw, "Yes");
}

TEST(BuildPrompt, ZeroShotIsInstructionAndQuery) {
  PromptConfig cfg;
  cfg.k_demonstrators = 0;
  cfg.topic_description = "Cannabis";
  const auto p = build_prompt("Hanf kaufen", {}, cfg);
  const std::string instruction =
      "You are given a text extracted from a German web page. Decide whether the page is about the topic "
      "\"Cannabis\". Answer with \"Yes\" or \"No\" only.";
  EXPECT_EQ(p, instruction + "\n\nText: Hanf kaufen\nAnswer:");
}

TEST(BuildPrompt, DemonstratorsInOrderWithAnswers) {
  PromptConfig cfg;
  const std::vector<Demonstrator> demos = {{"erste Seite", Label::negative}, {"zweite Seite", Label::positive}};
  const auto p = build_prompt("frage", demos, cfg);
  const auto a = p.find("Text: erste Seite\nAnswer: No\n");
  const auto b = p.find("Text: zweite Seite\nAnswer: Yes\n");
  const auto q = p.find("Text: frage\nAnswer:");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, q);
  EXPECT_EQ(q + std::string("Text: frage\nAnswer:").size(), p.size());
}

TEST(BuildPrompt, TextIsInsertedVerbatim) {
  PromptConfig cfg;
  const std::string tricky = "No {input} {demonstrators} \"quoted\" \\n Answer: Yes";
  const auto p = build_prompt(tricky, {{tricky, Label::negative}}, cfg);
  EXPECT_NE(p.find("Text: " + tricky + "\nAnswer: No"), std::string::npos);
  EXPECT_NE(p.find("Text: " + tricky + "\nAnswer:", p.size() - tricky.size() - 20), std::string::npos);
}

TEST(BuildPrompt, MissingPlaceholderIsConfigError) {
  PromptConfig cfg;
  cfg.prompt_template = "{instruction} {input}";
  EXPECT_THROW(build_prompt("x", {}, cfg), ConfigError);
  cfg.prompt_template = "{instruction}{demonstrators}{input}";
  EXPECT_NO_THROW(build_prompt("x", {}, cfg));
}

TEST(BuildPrompt, RenderedAnswersRoundTrip) {
  for (const auto& d : pool(3, 3)) {
    const auto r = render_demonstrator(d);
    const auto at = r.rfind("Answer:");
    ASSERT_NE(at, std::string::npos);
    const auto parsed = parse_answer(r.substr(at + 7));
    EXPECT_EQ(parsed.value, d.label == Label::positive ? ParsedAnswer::Value::positive : ParsedAnswer::Value::negative);
  }
}

TEST(Demonstrators, RandomIsDeterministicPerSeed) {
  PromptConfig cfg;
  cfg.seed = 9;
  const auto train = pool(10, 30);
  const auto a = sample_demonstrators(train, "q", cfg);
  const auto b = sample_demonstrators(train, "q", cfg);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  std::set<std::string> distinct;
  for (const auto& d : a) distinct.insert(d.text);
  EXPECT_EQ(distinct.size(), 4u);
  cfg.seed = 10;
  bool differs = false;
  for (int s = 10; s < 20 && !differs; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto c = sample_demonstrators(train, "q", cfg);
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].text != c[i].text;
  }
  EXPECT_TRUE(differs);
}

TEST(Demonstrators, BalancedSplitsClasses) {
  PromptConfig cfg;
  cfg.sampling = DemoSampling::balanced;
  const auto train = pool(3, 50);
  for (int k : {4, 5}) {
    cfg.k_demonstrators = k;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cfg.seed = seed;
      const auto d = sample_demonstrators(train, "q", cfg);
      const auto pos = std::count_if(d.begin(), d.end(), [](const auto& x) { return x.label == Label::positive; });
      EXPECT_EQ(pos, (k + 1) / 2);
      EXPECT_EQ(static_cast<int>(d.size()) - pos, k / 2);
    }
  }
  cfg.k_demonstrators = 4;
  EXPECT_THROW(sample_demonstrators(pool(0, 10), "q", cfg), InputError);
}

TEST(Demonstrators, TooFewTrainingItems) {
  PromptConfig cfg;
  cfg.k_demonstrators = 5;
  EXPECT_THROW(sample_demonstrators(pool(2, 2), "q", cfg), InputError);
  cfg.k_demonstrators = 0;
  EXPECT_TRUE(sample_demonstrators({}, "q", cfg).empty());
}

TEST(Demonstrators, KnnNeedsEmbedder) {
  PromptConfig cfg;
  cfg.sampling = DemoSampling::knn;
  EXPECT_THROW(sample_demonstrators(pool(3, 3), "q", cfg), ConfigError);
}

TEST(Demonstrators, KnnIdenticalQueryComesFirst) {
  PromptConfig cfg;
  cfg.sampling = DemoSampling::knn;
  const auto train = pool(5, 5);
  MockBackend mock;
  const EmbedFn embed = [&](const std::vector<std::string>& t) {
    std::vector<std::vector<double>> out;
    for (const auto& s : t) out.push_back(mock.embed_one(s));
    return out;
  };
  const auto d = sample_demonstrators(train, train[7].text, cfg, embed);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].text, train[7].text);
}

TEST(Demonstrators, KnnMatchesBruteForceRanking) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    TableEmbed emb;
    std::vector<Demonstrator> train;
    const std::size_t n = 5 + rng.below(30);
    const std::size_t dim = 1 + rng.below(6);
    auto vec = [&] {
      std::vector<double> v(dim);
      // coarse grid so exact distance ties happen
      for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
      return v;
    };
    for (std::size_t i = 0; i < n; ++i) {
      train.push_back({"t" + std::to_string(i), i % 2 ? Label::positive : Label::negative});
      emb.table[train.back().text] = vec();
    }
    emb.table["query"] = vec();
    PromptConfig cfg;
    cfg.sampling = DemoSampling::knn;
    cfg.k_demonstrators = static_cast<int>(1 + rng.below(n));
    const auto got = sample_demonstrators(train, "query", cfg, EmbedFn(emb));

    // oracle: distance by direct formula, ties broken by index
    const auto& q = emb.table["query"];
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = emb.table[train[i].text];
      double dot = 0, nq = 0, nv = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        dot += q[j] * v[j];
        nq += q[j] * q[j];
        nv += v[j] * v[j];
      }
      const double dist = (nq == 0 || nv == 0) ? 1.0 : 1.0 - dot / std::sqrt(nq * nv);
      all.emplace_back(dist, i);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first < b.first;
      return a.second < b.second;
    });
    ASSERT_EQ(got.size(), static_cast<std::size_t>(cfg.k_demonstrators));
    for (std::size_t i = 0; i < got.size(); ++i) {
      // equal-distance neighbours may differ by rounding; compare distances
      const auto& v = emb.table[got[i].text];
      EXPECT_NEAR(cosine_distance(q, v), all[i].first, 1e-12) << "trial " << trial << " rank " << i;
    }
    for (std::size_t i = 1; i < got.size(); ++i) {
      EXPECT_LE(cosine_distance(q, emb.table[got[i - 1].text]), cosine_distance(q, emb.table[got[i].text]));
    }
  }
}

TEST(Prompts, IndependentOfQueryOrder) {
  const auto eval = synthetic_chunks(5, 20, 1);
  const auto train = synthetic_chunks(10, 40, 2);
  PromptConfig cfg;
  cfg.seed = 3;
  const auto a = build_prompts(eval, train, cfg);
  auto reversed = eval;
  std::reverse(reversed.begin(), reversed.end());
  auto b = build_prompts(reversed, train, cfg);
  std::reverse(b.begin(), b.end());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].prompt, b[i].prompt);
}

TEST(Prompts, PackRoundTrip) {
  test::TempDir dir;
  const auto eval = synthetic_chunks(2, 5, 1);
  const auto train = synthetic_chunks(4, 8, 2);
  const auto pack = build_prompts(eval, train, PromptConfig{});
  save_prompt_pack(pack, GenerationParams{}, dir / "pack.jsonl");
  const auto back = load_prompt_pack(dir / "pack.jsonl");
  ASSERT_EQ(back.size(), pack.size());
  for (std::size_t i = 0; i < pack.size(); ++i) {
    EXPECT_EQ(back[i].prompt, pack[i].prompt);
    EXPECT_EQ(back[i].page_id, pack[i].page_id);
    EXPECT_EQ(back[i].gold, pack[i].gold);
  }
  const auto line = json::parse(io::read_file(dir / "pack.jsonl").substr(0, io::read_file(dir / "pack.jsonl").find('\n')));
  EXPECT_DOUBLE_EQ(line["temperature"].get<double>(), 0.3);
  EXPECT_EQ(line["top_k"], 50);
  EXPECT_DOUBLE_EQ(line["top_p"].get<double>(), 0.95);
}

TEST(Prompts, OfflineResponsesAreMatchedByChunk) {
  const std::vector<PromptRecord> pack = {
      {"a", 0, Label::positive, "p"}, {"a", 1, Label::positive, "p"}, {"b", 0, Label::negative, "p"},
      {"c", 0, Label::negative, "p"}};
  const std::vector<json> responses = {{{"page_id", "a"}, {"index", 1}, {"text", "Yes."}},
                                       {{"page_id", "a"}, {"index", 0}, {"text", "Hmm"}},
                                       {{"page_id", "b"}, {"index", 0}, {"text", "no"}}};
  const auto r = parse_responses(pack, responses);
  ASSERT_EQ(r.documents.size(), 3u);
  EXPECT_EQ(r.documents[0].predicted, Label::positive);
  EXPECT_EQ(r.documents[1].predicted, Label::negative);
  EXPECT_EQ(r.documents[2].predicted, Label::negative);
  EXPECT_EQ(r.unparseable, 1u);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_THROW(parse_responses(pack, {responses[0], responses[0]}), InputError);
}

class IclRun : public ::testing::Test {
 protected:
  static std::vector<Label> predicted(const IclResult& r) {
    std::vector<Label> out;
    for (const auto& d : r.documents) out.push_back(d.predicted);
    return out;
  }
  static Metrics metrics(const IclResult& r) {
    std::vector<std::pair<Label, Label>> p;
    for (std::size_t i = 0; i < r.documents.size(); ++i) p.emplace_back(r.document_gold[i], r.documents[i].predicted);
    return compute_metrics(p);
  }
  std::vector<Chunk> eval_ = synthetic_chunks(10, 60, 21);
  std::vector<Chunk> train_ = synthetic_chunks(20, 80, 22);
};

TEST_F(IclRun, AlwaysYesAndAlwaysNo) {
  MockBackend yes;
  yes.reply = MockBackend::Reply::always_yes;
  BackendClient cy(std::make_unique<InProcessTransport>(yes));
  const auto pack = build_prompts(eval_, train_, PromptConfig{});
  auto r = run_icl(pack, GenerationParams{}, cy);
  for (auto l : predicted(r)) EXPECT_EQ(l, Label::positive);
  EXPECT_DOUBLE_EQ(metrics(r).recall, 1.0);

  MockBackend no;
  no.reply = MockBackend::Reply::always_no;
  BackendClient cn(std::make_unique<InProcessTransport>(no));
  r = run_icl(pack, GenerationParams{}, cn);
  for (auto l : predicted(r)) EXPECT_EQ(l, Label::negative);
}

TEST_F(IclRun, KeywordMockIsPerfectForEverySampler) {
  for (auto s : {DemoSampling::random, DemoSampling::balanced, DemoSampling::knn}) {
    BackendClient client(std::make_unique<InProcessTransport>(MockBackend{}));
    PromptConfig cfg;
    cfg.sampling = s;
    cfg.seed = 5;
    const auto pack = build_prompts(eval_, train_, cfg, [&](const auto& t) { return client.embed(t); });
    const auto r = run_icl(pack, GenerationParams{}, client);
    EXPECT_DOUBLE_EQ(metrics(r).f1, 1.0) << to_string(s);
    EXPECT_EQ(r.unparseable, 0u);
  }
}

TEST_F(IclRun, GenerationParamsAreSentVerbatim) {
  auto seen = std::make_shared<std::vector<json>>();
  BackendClient client(std::make_unique<InProcessTransport>([seen](const json& r) {
    seen->push_back(r);
    return MockBackend{}(r);
  }));
  const auto pack = build_prompts(eval_, train_, PromptConfig{});
  run_icl(pack, GenerationParams{}, client);
  ASSERT_EQ(seen->size(), pack.size());
  for (std::size_t i = 0; i < seen->size(); ++i) {
    const auto& r = (*seen)[i];
    EXPECT_EQ(r["op"], "generate");
    EXPECT_EQ(r["temperature"].get<double>(), 0.3);
    EXPECT_EQ(r["top_k"].get<int>(), 50);
    EXPECT_EQ(r["top_p"].get<double>(), 0.95);
    EXPECT_EQ(r["prompt"], pack[i].prompt);
  }
}

TEST_F(IclRun, UnparseableCountsAsNegative) {
  MockBackend m;
  m.reply = MockBackend::Reply::unparseable;
  BackendClient client(std::make_unique<InProcessTransport>(m));
  const auto pack = build_prompts(eval_, train_, PromptConfig{});
  const auto r = run_icl(pack, GenerationParams{}, client);
  EXPECT_EQ(r.unparseable, pack.size());
  for (auto l : predicted(r)) EXPECT_EQ(l, Label::negative);
}

TEST_F(IclRun, TransientFailuresAreRetried) {
  auto calls = std::make_shared<int>(0);
  BackendClient client(std::make_unique<InProcessTransport>([calls](const json& r) -> json {
    if ((*calls)++ % 2 == 0) throw std::runtime_error("busy");
    return MockBackend{}(r);
  }));
  const auto pack = build_prompts(eval_, train_, PromptConfig{});
  const auto r = run_icl(pack, GenerationParams{}, client, {.retries = 3, .batch = 8});
  EXPECT_EQ(r.failed, 0u);
  EXPECT_DOUBLE_EQ(metrics(r).f1, 1.0);
}

TEST_F(IclRun, PersistentFailuresAreRecorded) {
  auto calls = std::make_shared<int>(0);
  BackendClient client(std::make_unique<InProcessTransport>([calls](const json&) -> json {
    ++*calls;
    throw std::runtime_error("down");
  }));
  std::vector<PromptRecord> pack = {{"a", 0, Label::positive, "Text: x\nAnswer:"}};
  const auto r = run_icl(pack, GenerationParams{}, client, {.retries = 2, .batch = 1});
  EXPECT_EQ(r.failed, 1u);
  EXPECT_EQ(r.documents[0].predicted, Label::negative);
  ASSERT_TRUE(r.chunks[0].error.has_value());
  EXPECT_NE(r.chunks[0].error->find("down"), std::string::npos);
  EXPECT_EQ(*calls, 1 + 3);  // one batch attempt, then 1 + retries single calls
}
