#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/chunker.hpp"
#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/io.hpp"
#include "webtopic/random.hpp"
#include "webtopic/scoring.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

enum class DemoSampling { random, balanced, knn };

inline std::string_view to_string(DemoSampling s) {
  switch (s) {
    case DemoSampling::random: return "random";
    case DemoSampling::balanced: return "balanced";
    case DemoSampling::knn: return "knn";
  }
  return "random";
}

inline DemoSampling parse_demo_sampling(std::string_view s) {
  if (s == "random") return DemoSampling::random;
  if (s == "balanced") return DemoSampling::balanced;
  if (s == "knn") return DemoSampling::knn;
  throw ConfigError("unknown demonstrator sampling '" + std::string(s) + "'");
}

inline constexpr std::string_view kDefaultPromptTemplate = "{instruction}\n\n{demonstrators}Text: {input}\nAnswer:";
inline constexpr std::string_view kDefaultInstruction =
    "You are given a text extracted from a German web page. Decide whether the page is about the "
    "topic \"{topic}\". Answer with \"Yes\" or \"No\" only.";

struct PromptConfig {
  std::string topic_description = "cannabis";
  int k_demonstrators = 4;
  DemoSampling sampling = DemoSampling::random;
  std::uint64_t seed = 0;
  std::string instruction = std::string(kDefaultInstruction);  // {topic} is substituted
  std::string prompt_template = std::string(kDefaultPromptTemplate);
};

inline void validate(const PromptConfig& c) {
  if (c.k_demonstrators < 0) throw ConfigError("k_demonstrators must be >= 0");
  for (std::string_view p : {"{instruction}", "{demonstrators}", "{input}"}) {
    if (c.prompt_template.find(p) == std::string::npos) {
      throw ConfigError("prompt template lacks placeholder " + std::string(p));
    }
  }
}

struct Demonstrator {
  std::string text;
  Label label = Label::negative;
};

using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Picks demonstrators from a fixed training pool. Each query gets its own
/// random stream derived from the seed and a query key, so results do not
/// depend on the order queries are processed in.
class DemonstratorSampler {
 public:
  DemonstratorSampler(std::vector<Demonstrator> pool, PromptConfig cfg, const EmbedFn& embed = {})
      : pool_(std::move(pool)), cfg_(std::move(cfg)), embed_(embed) {
    validate(cfg_);
    const auto k = static_cast<std::size_t>(cfg_.k_demonstrators);
    if (k == 0) return;
    if (k > pool_.size()) {
      throw InputError("k_demonstrators (" + std::to_string(k) + ") exceeds training pool (" +
                       std::to_string(pool_.size()) + ")");
    }
    if (cfg_.sampling == DemoSampling::balanced) {
      for (std::size_t i = 0; i < pool_.size(); ++i) (pool_[i].label == Label::positive ? pos_ : neg_).push_back(i);
      if (pos_.size() < (k + 1) / 2 || neg_.size() < k / 2) {
        throw InputError("balanced sampling needs " + std::to_string((k + 1) / 2) + " positive and " +
                         std::to_string(k / 2) + " negative examples");
      }
    }
    if (cfg_.sampling == DemoSampling::knn) {
      if (!embed_) throw ConfigError("knn sampling needs an embedding function");
      std::vector<std::string> texts;
      for (const auto& d : pool_) texts.push_back(d.text);
      pool_vectors_ = embed_(texts);
      if (pool_vectors_.size() != pool_.size()) throw ProtocolError("embedding count does not match pool");
    }
  }

  const std::vector<Demonstrator>& pool() const { return pool_; }

  /// Indices into pool(). `query_key` seeds the per-query stream.
  std::vector<std::size_t> select(const std::string& query_text, std::string_view query_key) const {
    if (cfg_.k_demonstrators == 0) return {};
    if (cfg_.sampling == DemoSampling::knn) return nearest(embed_({query_text}).at(0));
    return select_random(query_key);
  }

  std::vector<std::size_t> nearest(const std::vector<double>& q) const {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < pool_vectors_.size(); ++i) d.emplace_back(cosine_distance(q, pool_vectors_[i]), i);
    std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg_.k_demonstrators); ++i) out.push_back(d[i].second);
    return out;
  }

 private:
  std::vector<std::size_t> select_random(std::string_view query_key) const {
    const auto k = static_cast<std::size_t>(cfg_.k_demonstrators);
    Rng rng(detail::splitmix(cfg_.seed ^ detail::fnv1a(query_key)));
    if (cfg_.sampling == DemoSampling::random) return rng.sample_indices(pool_.size(), k);
    std::vector<std::size_t> out;
    for (auto i : rng.sample_indices(pos_.size(), (k + 1) / 2)) out.push_back(pos_[i]);
    for (auto i : rng.sample_indices(neg_.size(), k / 2)) out.push_back(neg_[i]);
    rng.shuffle(out);
    return out;
  }

  std::vector<Demonstrator> pool_;
  PromptConfig cfg_;
  EmbedFn embed_;
  std::vector<std::size_t> pos_, neg_;
  std::vector<std::vector<double>> pool_vectors_;
};

/// Convenience wrapper for a single query.
inline std::vector<Demonstrator> sample_demonstrators(const std::vector<Demonstrator>& train,
                                                      const std::string& query, const PromptConfig& cfg,
                                                      const EmbedFn& embed = {}) {
  DemonstratorSampler s(train, cfg, embed);
  std::vector<Demonstrator> out;
  for (auto i : s.select(query, query)) out.push_back(train[i]);
  return out;
}

inline std::string_view answer_token(Label l) { return l == Label::positive ? "Yes" : "No"; }

inline std::string render_demonstrator(const Demonstrator& d) {
  return "Text: " + d.text + "\nAnswer: " + std::string(answer_token(d.label)) + "\n\n";
}

namespace detail {

// Replaces each {name} in one left-to-right pass; substituted text is never
// rescanned, and braces not naming a known slot are copied as is.
inline std::string substitute(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = slots.find(tmpl.substr(i + 1, close - i - 1));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

}  // namespace detail

inline std::string build_prompt(const std::string& query, const std::vector<Demonstrator>& demonstrators,
                                const PromptConfig& cfg) {
  validate(cfg);
  std::string demos;
  for (const auto& d : demonstrators) demos += render_demonstrator(d);
  const auto instruction = detail::substitute(cfg.instruction, {{"topic", cfg.topic_description}});
  return detail::substitute(cfg.prompt_template,
                            {{"instruction", instruction}, {"demonstrators", demos}, {"input", query}});
}

struct ParsedAnswer {
  enum class Value { positive, negative, unparseable };
  Value value = Value::unparseable;
  std::string raw;
};

inline std::string_view to_string(ParsedAnswer::Value v) {
  switch (v) {
    case ParsedAnswer::Value::positive: return "positive";
    case ParsedAnswer::Value::negative: return "negative";
    case ParsedAnswer::Value::unparseable: return "unparseable";
  }
  return "unparseable";
}

/// First alphabetic token of the lowercased reply decides: "yes" or "no".
inline ParsedAnswer parse_answer(std::string_view raw) {
  ParsedAnswer a;
  a.raw = std::string(raw);
  const std::string lower = unicode::to_lower(raw);
  std::string token;
  bool started = false;
  for (std::size_t i = 0; i < lower.size();) {
    const auto d = unicode::decode(lower, i);
    const bool letter = unicode::is_word(d.cp) && !(d.cp >= '0' && d.cp <= '9') && d.cp != '_';
    if (letter) {
      started = true;
      unicode::append_utf8(token, d.cp);
    } else if (started) {
      break;
    }
    i += d.length;
  }
  if (token == "yes") a.value = ParsedAnswer::Value::positive;
  else if (token == "no") a.value = ParsedAnswer::Value::negative;
  return a;
}

// ---------------------------------------------------------------------------
// Prompt packs and runs

struct PromptRecord {
  std::string page_id;
  int index = 0;
  Label gold = Label::negative;
  std::string prompt;
};

inline std::string chunk_key(const std::string& page_id, int index) {
  return page_id + "#" + std::to_string(index);
}

/// One prompt per evaluation chunk, in input order.
inline std::vector<PromptRecord> build_prompts(const std::vector<Chunk>& eval_chunks, const std::vector<Chunk>& train,
                                               const PromptConfig& cfg, const EmbedFn& embed = {}) {
  std::vector<Demonstrator> pool;
  pool.reserve(train.size());
  for (const auto& c : train) pool.push_back({c.text, c.label});
  DemonstratorSampler sampler(std::move(pool), cfg, embed);

  std::vector<std::vector<double>> query_vectors;
  if (cfg.k_demonstrators > 0 && cfg.sampling == DemoSampling::knn) {
    std::vector<std::string> texts;
    for (const auto& c : eval_chunks) texts.push_back(c.text);
    query_vectors = embed(texts);
    if (query_vectors.size() != texts.size()) throw ProtocolError("embedding count does not match queries");
  }

  std::vector<PromptRecord> out;
  out.reserve(eval_chunks.size());
  for (std::size_t i = 0; i < eval_chunks.size(); ++i) {
    const auto& c = eval_chunks[i];
    std::vector<std::size_t> idx;
    if (!query_vectors.empty()) idx = sampler.nearest(query_vectors[i]);
    else idx = sampler.select(c.text, chunk_key(c.page_id, c.index));
    std::vector<Demonstrator> demos;
    for (auto j : idx) demos.push_back(sampler.pool()[j]);
    out.push_back({c.page_id, c.index, c.label, build_prompt(c.text, demos, cfg)});
  }
  return out;
}

inline void save_prompt_pack(const std::vector<PromptRecord>& records, const GenerationParams& gen,
                             const std::filesystem::path& path) {
  io::atomic_write(path, [&](std::ostream& out) {
    for (const auto& r : records) {
      const json j = {{"page_id", r.page_id}, {"index", r.index},           {"gold", to_string(r.gold)},
                      {"prompt", r.prompt},   {"temperature", gen.temperature}, {"top_k", gen.top_k},
                      {"top_p", gen.top_p}};
      out << frame(j);
    }
  });
}

inline std::vector<PromptRecord> load_prompt_pack(const std::filesystem::path& path) {
  std::vector<PromptRecord> out;
  io::for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("page_id").get<std::string>(), j.at("index").get<int>(),
                   parse_label(j.at("gold").get<std::string>()), j.at("prompt").get<std::string>()});
  });
  return out;
}

struct ChunkAnswer {
  std::string page_id;
  int index = 0;
  Label gold = Label::negative;
  ParsedAnswer answer;
  std::optional<std::string> error;  // set when generation failed after retries
};

struct IclResult {
  std::vector<ChunkAnswer> chunks;
  std::vector<ScoredDocument> documents;  // first-seen page order
  std::vector<Label> document_gold;       // parallel to documents
  std::size_t unparseable = 0;
  std::size_t failed = 0;
};

/// Folds chunk answers into documents by the OR rule. Unparseable and failed
/// chunks count as negative and are tallied separately.
inline IclResult assemble_icl(std::vector<ChunkAnswer> chunks) {
  IclResult r;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<double>> scores;
  for (const auto& c : chunks) {
    auto [it, fresh] = slot.try_emplace(c.page_id, scores.size());
    if (fresh) {
      scores.emplace_back();
      r.document_gold.push_back(c.gold);
    }
    if (c.error) ++r.failed;
    else if (c.answer.value == ParsedAnswer::Value::unparseable) ++r.unparseable;
    scores[it->second].push_back(!c.error && c.answer.value == ParsedAnswer::Value::positive ? 1.0 : 0.0);
  }
  std::vector<std::string> order(slot.size());
  for (const auto& [id, i] : slot) order[i] = id;
  for (std::size_t i = 0; i < order.size(); ++i) r.documents.push_back(aggregate_document(order[i], scores[i]));
  r.chunks = std::move(chunks);
  return r;
}

/// Matches offline responses ({"page_id","index","text"} lines) to a prompt
/// pack. Chunks without a response are recorded as failed.
inline IclResult parse_responses(const std::vector<PromptRecord>& pack, const std::vector<json>& responses) {
  std::map<std::string, std::string> text;
  for (const auto& r : responses) {
    const auto key = chunk_key(r.at("page_id").get<std::string>(), r.at("index").get<int>());
    if (!text.emplace(key, r.at("text").get<std::string>()).second) throw InputError("duplicate response for " + key);
  }
  std::vector<ChunkAnswer> chunks;
  for (const auto& p : pack) {
    ChunkAnswer a{p.page_id, p.index, p.gold, {}, std::nullopt};
    const auto it = text.find(chunk_key(p.page_id, p.index));
    if (it == text.end()) a.error = "no response";
    else a.answer = parse_answer(it->second);
    chunks.push_back(std::move(a));
  }
  return assemble_icl(std::move(chunks));
}

struct IclRunOptions {
  int retries = 3;
  std::size_t batch = 64;
};

/// Sends every prompt to the backend's generate op. A failed batch falls
/// back to per-prompt calls with bounded retries.
inline IclResult run_icl(const std::vector<PromptRecord>& prompts, const GenerationParams& gen, BackendClient& client,
                         const IclRunOptions& opt = {}) {
  validate(gen);
  if (opt.retries < 0) throw ConfigError("retries must be >= 0");
  std::vector<ChunkAnswer> chunks;
  chunks.reserve(prompts.size());
  const std::size_t batch = std::max<std::size_t>(1, opt.batch);
  for (std::size_t b = 0; b < prompts.size(); b += batch) {
    const auto e = std::min(prompts.size(), b + batch);
    std::vector<std::string> texts;
    for (std::size_t i = b; i < e; ++i) texts.push_back(prompts[i].prompt);
    std::vector<std::optional<std::string>> replies(texts.size());
    std::vector<std::string> errors(texts.size());
    try {
      const auto got = client.generate_many(texts, gen);
      for (std::size_t i = 0; i < got.size(); ++i) replies[i] = got[i];
    } catch (const TransportError&) {
      for (std::size_t i = 0; i < texts.size(); ++i) {
        for (int attempt = 0; attempt <= opt.retries && !replies[i]; ++attempt) {
          try {
            replies[i] = client.generate(texts[i], gen);
          } catch (const TransportError& ex) {
            errors[i] = ex.what();
          }
        }
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto& p = prompts[b + i];
      ChunkAnswer a{p.page_id, p.index, p.gold, {}, std::nullopt};
      if (replies[i]) a.answer = parse_answer(*replies[i]);
      else a.error = errors[i];
      chunks.push_back(std::move(a));
    }
  }
  return assemble_icl(std::move(chunks));
}

}  // namespace webtopic
