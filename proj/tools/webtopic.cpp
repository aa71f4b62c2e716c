// webtopic: command-line driver for the topic classification pipeline.
//
// Exit codes: 0 ok, 1 bad input or config, 2 backend/transport failure,
// 3 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "webtopic/webtopic.hpp"

namespace fs = std::filesystem;
using namespace webtopic;

namespace {

struct Globals {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  std::size_t jobs = 1;
};

PipelineConfig load(const Globals& g) { return load_config(g.config, g.overrides); }

fs::path or_default(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

void require_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec)) throw InputError("refusing to overwrite input " + in.string());
}

std::string json_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// ---------------------------------------------------------------------------
// shared loading

struct Dataset {
  std::vector<WebPage> corpus;
  std::unordered_map<std::string, const WebPage*> by_id;
  SplitMap splits;
  std::unordered_map<std::string, std::vector<Chunk>> chunks;  // by page id, index order
};

Dataset load_dataset(const PipelineConfig& cfg, const std::string& corpus, const std::string& splits,
                     const std::string& chunks, bool need_chunks = true) {
  Dataset d;
  d.corpus = load_corpus(or_default(corpus, cfg.paths.corpus));
  for (const auto& p : d.corpus) d.by_id[p.id] = &p;
  d.splits = load_manifest(or_default(splits, cfg.paths.splits), d.corpus);
  if (need_chunks) {
    for (auto& c : load_chunks(or_default(chunks, cfg.paths.chunks))) {
      if (!d.by_id.contains(c.page_id)) throw InputError("chunk refers to unknown page " + c.page_id);
      d.chunks[c.page_id].push_back(std::move(c));
    }
    for (auto& [id, v] : d.chunks) {
      std::stable_sort(v.begin(), v.end(), [](const Chunk& a, const Chunk& b) { return a.index < b.index; });
    }
  }
  return d;
}

// Pages of a named evaluation view, in corpus order.
std::vector<const WebPage*> split_pages(const Dataset& d, const std::string& name) {
  std::set<std::string> ids;
  if (name == "unbalanced") {
    for (const auto& id : unbalanced_eval_ids(d.splits, d.corpus)) ids.insert(id);
  } else if (name == "complete") {
    for (const auto* s : {"test", "unbl", "extd"}) {
      for (const auto& id : d.splits.at(s).page_ids) ids.insert(id);
    }
  } else {
    const auto it = d.splits.find(name);
    if (it == d.splits.end()) {
      throw InputError("unknown split '" + name + "' (train, test, unbl, extd, unbalanced, complete)");
    }
    ids.insert(it->second.page_ids.begin(), it->second.page_ids.end());
  }
  std::vector<const WebPage*> out;
  for (const auto& p : d.corpus) {
    if (ids.contains(p.id)) out.push_back(&p);
  }
  return out;
}

const std::vector<Chunk>& chunks_of(const Dataset& d, const std::string& id) {
  static const std::vector<Chunk> none;
  const auto it = d.chunks.find(id);
  return it == d.chunks.end() ? none : it->second;
}

// Classifier inputs for one page: a single URL text in url_only mode, else
// one text per chunk.
std::vector<std::string> page_inputs(const Dataset& d, const WebPage& p, FeatureMode mode) {
  if (mode == FeatureMode::url_only) return {url_feature_text(p.url)};
  std::vector<std::string> out;
  for (const auto& c : chunks_of(d, p.id)) out.push_back(feature_text(p.url, c.text, mode));
  return out;
}

std::vector<std::pair<std::string, Label>> training_examples(const Dataset& d, FeatureMode mode) {
  std::vector<std::pair<std::string, Label>> out;
  for (const auto* p : split_pages(d, "train")) {
    for (auto& t : page_inputs(d, *p, mode)) out.emplace_back(std::move(t), p->label);
  }
  if (out.empty()) throw InputError("train split yields no examples");
  return out;
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": not valid JSON: " + e.what());
  }
}

void print_splits(const SplitMap& s) {
  std::cout << "split    pos     neg\n";
  for (const auto& name : split_names()) {
    const auto& x = s.at(name);
    std::cout << std::left << std::setw(6) << name << std::right << std::setw(6) << x.n_pos << std::setw(8) << x.n_neg
              << "\n";
  }
}

// ---------------------------------------------------------------------------
// ingest

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  if (quoted) throw InputError("unterminated quote");
  return out;
}

std::vector<json> read_annotations(const fs::path& path) {
  std::vector<json> rows;
  if (path.extension() == ".jsonl") {
    io::for_each_jsonl(path, [&](const json& j, std::size_t) { rows.push_back(j); });
    return rows;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = csv_fields(line);
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (header.empty()) {
      header = fields;
      continue;
    }
    if (fields.size() != header.size()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields");
    }
    json row = json::object();
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_ingest(const Globals& g, const std::string& in, const std::string& out) {
  const auto cfg = load(g);
  std::vector<WebPage> pages;
  std::set<std::string> ids;
  const auto rows = read_annotations(in);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    WebPage p;
    try {
      p.url = r.at("url").get<std::string>();
      p.label = parse_label(r.at("label").get<std::string>());
      p.confidence = parse_confidence(r.value("confidence", std::string("high")));
      p.source = parse_source(r.value("source", std::string("panel")));
      p.topic = r.value("topic", cfg.topic);
      p.id = r.value("id", std::string());
    } catch (const json::exception& e) {
      throw InputError(in + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
    if (p.id.empty()) {
      std::ostringstream id;
      id << "p" << std::setw(6) << std::setfill('0') << i + 1;
      p.id = id.str();
    }
    const auto u = parse_url(p.url);
    if (u.scheme != "http" && u.scheme != "https") throw InputError("record " + std::to_string(i + 1) + ": not an http(s) URL");
    if (!ids.insert(p.id).second) throw InputError("duplicate page id " + p.id);
    validate(p);
    pages.push_back(std::move(p));
  }
  const auto dest = or_default(out, cfg.paths.corpus);
  save_corpus(pages, dest);
  std::cout << "ingested " << pages.size() << " pages -> " << dest.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fetch / extract

int cmd_fetch(const Globals& g, const std::string& in, const std::string& out, bool refetch) {
  const auto cfg = load(g);
  require_distinct(in, out);
  auto pages = load_corpus(in);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (refetch || pages[i].fetch_status.kind == FetchStatus::Kind::not_fetched) todo.push_back(i);
  }
  parallel_for(todo.size(), g.jobs, [&](std::size_t k) {
    auto& p = pages[todo[k]];
    const auto got = fetch_page(p.url, cfg.fetch);
    p.html = got.html;
    p.fetch_status = got.fetch_status;
    p.text.reset();
  });
  std::map<std::string, int> tally;
  for (auto i : todo) ++tally[to_string(pages[i].fetch_status)];
  save_corpus(pages, out);
  std::cout << "fetched " << todo.size() << " pages";
  for (const auto& [k, n] : tally) std::cout << "  " << k << "=" << n;
  std::cout << "\n";
  return 0;
}

int cmd_extract(const Globals& g, const std::string& in, const std::string& out) {
  load(g);
  require_distinct(in, out);
  auto pages = load_corpus(in);
  std::size_t n = 0;
  parallel_for(pages.size(), g.jobs, [&](std::size_t i) {
    auto& p = pages[i];
    if (p.html) p.text = extract_text(*p.html);
    else p.text.reset();
  });
  for (const auto& p : pages) n += p.text && !p.text->empty();
  save_corpus(pages, out);
  std::cout << "extracted text for " << n << " of " << pages.size() << " pages\n";
  return 0;
}

// ---------------------------------------------------------------------------
// chunk / split / sample

int cmd_chunk(const Globals& g, const std::string& corpus, const std::string& out) {
  const auto cfg = load(g);
  const auto pages = load_corpus(or_default(corpus, cfg.paths.corpus));
  std::vector<std::vector<Chunk>> per_page(pages.size());
  parallel_for(pages.size(), g.jobs, [&](std::size_t i) {
    if (pages[i].text && !pages[i].text->empty()) per_page[i] = chunk_page(pages[i], cfg.chunker);
  });
  std::vector<Chunk> all;
  std::size_t empty = 0;
  for (auto& v : per_page) {
    empty += v.empty();
    for (auto& c : v) all.push_back(std::move(c));
  }
  const auto dest = or_default(out, cfg.paths.chunks);
  save_chunks(all, dest);
  std::cout << all.size() << " chunks from " << pages.size() - empty << " pages (" << empty
            << " without content) -> " << dest.string() << "\n";
  return 0;
}

int cmd_split(const Globals& g, const std::string& corpus, const std::string& out) {
  const auto cfg = load(g);
  const auto pages = load_corpus(or_default(corpus, cfg.paths.corpus));
  const auto splits = build_splits(pages, cfg.split, cfg.train_selector());
  const auto dest = or_default(out, cfg.paths.splits);
  save_manifest(splits, dest);
  print_splits(splits);
  std::cout << "manifest -> " << dest.string() << "\n";
  return 0;
}

int cmd_sample(const Globals& g, const std::string& corpus, std::size_t k, const std::string& kind,
               const std::string& out) {
  auto cfg = load(g);
  if (!kind.empty()) cfg.sampler = parse_sampler_kind(kind);
  const auto pages = load_corpus(or_default(corpus, cfg.paths.corpus));
  std::vector<const WebPage*> negatives;
  for (const auto& p : pages) {
    if (p.label == Label::negative && p.confidence == Confidence::high) negatives.push_back(&p);
  }
  if (k > negatives.size()) {
    throw InputError("asked for " + std::to_string(k) + " negatives, corpus has " + std::to_string(negatives.size()));
  }
  const auto idx = cfg.train_selector()(negatives, k);
  if (idx.size() != k) throw InvariantError("sampler returned wrong count");
  io::atomic_write(out, [&](std::ostream& os) {
    for (auto i : idx) os << json_line({{"page_id", negatives.at(i)->id}}) << "\n";
  });
  std::set<std::string> hosts;
  for (auto i : idx) hosts.insert(host_key(negatives[i]->url));
  std::cout << "sampled " << k << " of " << negatives.size() << " negatives (" << to_string(cfg.sampler) << ", "
            << hosts.size() << " hosts) -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// training

fs::path model_path(const PipelineConfig& cfg, const std::string& flag, const std::string& kind) {
  return or_default(flag, cfg.paths.models / (kind + ".json"));
}

int cmd_train_baseline(const Globals& g, const std::string& kind, const std::string& corpus, const std::string& splits,
                       const std::string& chunks, const std::string& out) {
  const auto cfg = load(g);
  const bool svm = kind == "svm";
  const auto mode = svm ? cfg.baseline.feature_mode : FeatureMode::url_only;
  const auto d = load_dataset(cfg, corpus, splits, chunks, mode == FeatureMode::url_and_content);
  const auto examples = training_examples(d, mode);
  json model;
  if (svm) {
    std::vector<std::string> texts;
    std::vector<Label> labels;
    for (const auto& [t, l] : examples) {
      texts.push_back(t);
      labels.push_back(l);
    }
    model = TextSvm::train(texts, labels, cfg.baseline.max_features, cfg.baseline.svm).to_json();
  } else {
    model = lib_train(examples, cfg.baseline.lib_order).to_json();
  }
  model["feature_mode"] = to_string(mode);
  const auto dest = model_path(cfg, out, kind);
  io::atomic_write_string(dest, model.dump() + "\n");
  std::cout << "trained " << kind << " on " << examples.size() << " examples (" << to_string(mode) << ") -> "
            << dest.string() << "\n";
  return 0;
}

BackendClient connect_backend(const PipelineConfig& cfg, const std::string& endpoint) {
  const auto ep = endpoint.empty() ? cfg.backend.endpoint : endpoint;
  if (ep.empty()) throw ConfigError("no backend endpoint (set backend.endpoint or pass --endpoint)");
  return BackendClient::connect(ep, cfg.backend.batch);
}

int cmd_train_neural(const Globals& g, const std::string& endpoint, const std::string& corpus,
                     const std::string& splits, const std::string& chunks, const std::string& out) {
  const auto cfg = load(g);
  const auto mode = cfg.backend.train.feature_mode;
  const auto d = load_dataset(cfg, corpus, splits, chunks, mode == FeatureMode::url_and_content);
  const auto examples = training_examples(d, mode);
  auto client = connect_backend(cfg, endpoint);
  const auto id = client.train(examples, cfg.backend.train);
  const json handle = {{"format", "webtopic-neural"},
                       {"version", 1},
                       {"endpoint", endpoint.empty() ? cfg.backend.endpoint : endpoint},
                       {"model", id},
                       {"config", to_json(cfg.backend.train)}};
  const auto dest = model_path(cfg, out, "neural");
  io::atomic_write_string(dest, handle.dump(2) + "\n");
  std::cout << "backend trained model " << id << " on " << examples.size() << " examples -> " << dest.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// classification

// Chunk-level scorer in [0, 1]; `inputs` are per-page classifier inputs.
struct Scorer {
  FeatureMode mode = FeatureMode::url_and_content;
  std::function<std::vector<double>(const std::vector<std::string>&)> score;
};

Scorer load_scorer(const PipelineConfig& cfg, const std::string& kind, const fs::path& path, std::size_t jobs,
                   const std::string& endpoint) {
  const auto j = read_json_file(path);
  Scorer s;
  if (kind == "svm") {
    auto m = std::make_shared<TextSvm>(TextSvm::from_json(j));
    s.mode = parse_feature_mode(j.value("feature_mode", "url_and_content"));
    s.score = [m, jobs](const std::vector<std::string>& texts) {
      std::vector<double> out(texts.size());
      parallel_for(texts.size(), jobs, [&](std::size_t i) { out[i] = margin_to_score(m->score(texts[i])); });
      return out;
    };
  } else if (kind == "lib") {
    auto m = std::make_shared<LibModel>(LibModel::from_json(j));
    s.mode = FeatureMode::url_only;
    s.score = [m, jobs](const std::vector<std::string>& texts) {
      std::vector<double> out(texts.size());
      parallel_for(texts.size(), jobs, [&](std::size_t i) { out[i] = margin_to_score(m->score(texts[i]), true); });
      return out;
    };
  } else if (kind == "neural") {
    if (j.value("format", "") != "webtopic-neural") throw InputError(path.string() + ": not a neural model handle");
    const auto model = j.at("model").get<std::string>();
    auto client = std::make_shared<BackendClient>(
        connect_backend(cfg, endpoint.empty() ? j.value("endpoint", std::string()) : endpoint));
    s.mode = train_config_from_json(j.at("config")).feature_mode;
    s.score = [client, model](const std::vector<std::string>& texts) { return client->score(model, texts); };
  } else {
    throw ConfigError("unknown classifier '" + kind + "'");
  }
  return s;
}

struct Classified {
  std::vector<Prediction> documents;
  std::vector<Prediction> chunks;
};

Classified classify_with_scorer(const Dataset& d, const std::vector<const WebPage*>& pages, const Scorer& s,
                                double threshold) {
  std::vector<std::string> inputs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    for (auto& t : page_inputs(d, *pages[i], s.mode)) {
      inputs.push_back(std::move(t));
      owner.push_back(i);
    }
  }
  const auto scores = s.score(inputs);
  if (scores.size() != inputs.size()) throw InvariantError("scorer returned wrong number of scores");
  std::vector<std::vector<double>> per_page(pages.size());
  Classified out;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const auto& p = *pages[owner[k]];
    out.chunks.push_back({p.id, static_cast<int>(per_page[owner[k]].size()), p.label,
                          scores[k] >= threshold ? Label::positive : Label::negative, scores[k]});
    per_page[owner[k]].push_back(scores[k]);
  }
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const auto doc = aggregate_document(pages[i]->id, per_page[i], threshold);
    out.documents.push_back({doc.page_id, std::nullopt, pages[i]->label, doc.predicted, doc.doc_score});
  }
  return out;
}

std::vector<Chunk> split_chunks(const Dataset& d, const std::vector<const WebPage*>& pages) {
  std::vector<Chunk> out;
  for (const auto* p : pages) {
    for (const auto& c : chunks_of(d, p->id)) out.push_back(c);
  }
  return out;
}

std::vector<PromptRecord> make_prompts(const PipelineConfig& cfg, const Dataset& d,
                                       const std::vector<const WebPage*>& pages, const std::string& endpoint) {
  const auto eval = split_chunks(d, pages);
  const auto train = split_chunks(d, split_pages(d, "train"));
  EmbedFn embed;
  std::shared_ptr<BackendClient> client;
  if (cfg.icl.prompt.sampling == DemoSampling::knn && cfg.icl.prompt.k_demonstrators > 0) {
    client = std::make_shared<BackendClient>(connect_backend(cfg, endpoint));
    embed = [client](const std::vector<std::string>& t) { return client->embed(t); };
  }
  return build_prompts(eval, train, cfg.icl.prompt, embed);
}

Classified icl_predictions(const Dataset& d, const std::vector<const WebPage*>& pages, const IclResult& r) {
  Classified out;
  std::unordered_map<std::string, std::size_t> doc;
  for (std::size_t i = 0; i < r.documents.size(); ++i) doc[r.documents[i].page_id] = i;
  std::unordered_map<std::string, std::uint64_t> unparseable;
  for (const auto& c : r.chunks) {
    const bool pos = !c.error && c.answer.value == ParsedAnswer::Value::positive;
    const bool bad = !c.error && c.answer.value == ParsedAnswer::Value::unparseable;
    unparseable[c.page_id] += bad;
    out.chunks.push_back({c.page_id, c.index, c.gold, pos ? Label::positive : Label::negative, pos ? 1.0 : 0.0,
                          static_cast<std::uint64_t>(bad)});
  }
  for (const auto* p : pages) {
    const auto it = doc.find(p->id);
    if (it == doc.end()) {
      out.documents.push_back({p->id, std::nullopt, p->label, Label::negative, 0.0});
      continue;
    }
    const auto& sd = r.documents[it->second];
    out.documents.push_back({p->id, std::nullopt, p->label, sd.predicted, sd.doc_score, unparseable[p->id]});
  }
  (void)d;
  return out;
}

fs::path predictions_path(const PipelineConfig& cfg, const std::string& flag, const std::string& kind,
                          const std::string& split) {
  return or_default(flag, cfg.paths.predictions / (kind + "_" + split + ".jsonl"));
}

void write_classified(const Classified& c, const fs::path& out, const std::string& chunk_out) {
  save_predictions(c.documents, out);
  if (!chunk_out.empty()) save_predictions(c.chunks, chunk_out);
  std::size_t pos = 0;
  for (const auto& p : c.documents) pos += p.predicted == Label::positive;
  std::cout << c.documents.size() << " documents, " << pos << " predicted positive -> " << out.string() << "\n";
}

int cmd_classify(const Globals& g, const std::string& kind, const std::string& model, const std::string& split,
                 const std::string& endpoint, const std::string& corpus, const std::string& splits,
                 const std::string& chunks, const std::string& out, const std::string& chunk_out) {
  const auto cfg = load(g);
  const auto d = load_dataset(cfg, corpus, splits, chunks);
  const auto pages = split_pages(d, split);
  if (pages.empty()) throw InputError("split '" + split + "' is empty");
  Classified c;
  if (kind == "icl") {
    const auto prompts = make_prompts(cfg, d, pages, endpoint);
    auto client = connect_backend(cfg, endpoint);
    const auto r = run_icl(prompts, cfg.icl.generation, client, {.retries = cfg.icl.retries, .batch = cfg.backend.batch});
    if (!r.chunks.empty() && r.failed == r.chunks.size()) {
      throw TransportError("every generation request failed: " + r.chunks.front().error.value_or("unknown"));
    }
    c = icl_predictions(d, pages, r);
    std::cout << "icl: " << r.chunks.size() << " chunks, " << r.unparseable << " unparseable, " << r.failed
              << " failed\n";
  } else {
    c = classify_with_scorer(d, pages, load_scorer(cfg, kind, model_path(cfg, model, kind), g.jobs, endpoint),
                             cfg.eval.threshold);
  }
  write_classified(c, predictions_path(cfg, out, kind, split), chunk_out);
  return 0;
}

int cmd_prompt_pack(const Globals& g, const std::string& split, const std::string& endpoint, const std::string& corpus,
                    const std::string& splits, const std::string& chunks, const std::string& out) {
  const auto cfg = load(g);
  const auto d = load_dataset(cfg, corpus, splits, chunks);
  const auto pages = split_pages(d, split);
  const auto prompts = make_prompts(cfg, d, pages, endpoint);
  const auto dest = or_default(out, cfg.paths.predictions / ("prompts_" + split + ".jsonl"));
  save_prompt_pack(prompts, cfg.icl.generation, dest);
  std::cout << prompts.size() << " prompts -> " << dest.string() << "\n";
  return 0;
}

int cmd_parse_responses(const Globals& g, const std::string& pack_path, const std::string& responses_path,
                        const std::string& corpus, const std::string& out) {
  const auto cfg = load(g);
  const auto pack = load_prompt_pack(pack_path);
  std::vector<json> responses;
  io::for_each_jsonl(responses_path, [&](const json& j, std::size_t) { responses.push_back(j); });
  const auto r = parse_responses(pack, responses);
  // pages absent from the pack (no content) are not recoverable here; the
  // pack lists chunks only
  Dataset d;
  d.corpus = load_corpus(or_default(corpus, cfg.paths.corpus));
  std::vector<const WebPage*> pages;
  std::set<std::string> in_pack;
  for (const auto& p : pack) in_pack.insert(p.page_id);
  for (const auto& p : d.corpus) {
    if (in_pack.contains(p.id)) pages.push_back(&p);
  }
  const auto c = icl_predictions(d, pages, r);
  if (out.empty()) throw ConfigError("parse-responses needs --out");
  write_classified(c, out, "");
  std::cout << r.unparseable << " unparseable, " << r.failed << " without response\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval / compare / bench

int cmd_eval(const Globals& g, const std::vector<std::string>& preds, const std::string& model,
             const std::string& out) {
  const auto cfg = load(g);
  EvalReport report;
  report.topic = cfg.topic;
  report.model = model;
  for (const auto& spec : preds) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const auto p = load_predictions(path);
    if (p.empty()) throw InputError(path + ": no predictions");
    report.splits.push_back(evaluate_split(name, p));
  }
  const auto dir = or_default(out, cfg.paths.reports / model);
  emit_report(report, dir);
  std::cout << format_report(report) << "report -> " << dir.string() << "\n";
  return 0;
}

int cmd_compare(const Globals& g, const std::string& a, const std::string& b, const std::string& level,
                const std::string& out) {
  load(g);
  const auto pa = load_predictions(a), pb = load_predictions(b);
  const bool chunk = level == "chunk";
  for (const auto* set : {&pa, &pb}) {
    for (const auto& p : *set) {
      if (p.index.has_value() != chunk) {
        throw InputError("prediction files are not " + level + "-level (use --level " + (chunk ? "document" : "chunk") +
                         ")");
      }
    }
  }
  const auto r = mcnemar(pair_predictions(pa, pb));
  const auto j = to_json(r);
  if (!out.empty()) io::atomic_write_string(out, j.dump(2) + "\n");
  std::cout << "McNemar (" << level << " level): b=" << r.b << " c=" << r.c << " method=" << to_string(r.method)
            << " p=" << r.p_value << (r.significant_at_0_05 ? "  significant at 0.05" : "") << "\n";
  return 0;
}

int cmd_bench(const Globals& g, const std::string& kind, const std::string& model, const std::string& split,
              int runs, std::size_t limit, const std::string& endpoint, const std::string& corpus,
              const std::string& splits, const std::string& chunks, const std::string& out) {
  const auto cfg = load(g);
  const auto d = load_dataset(cfg, corpus, splits, chunks);
  const auto scorer = load_scorer(cfg, kind, model_path(cfg, model, kind), g.jobs, endpoint);
  std::vector<std::string> inputs;
  for (const auto* p : split_pages(d, split)) {
    for (const auto& c : chunks_of(d, p->id)) {
      if (limit && inputs.size() >= limit) break;
      inputs.push_back(feature_text(p->url, c.text, scorer.mode));
    }
  }
  const auto t = bench_throughput([&](const std::vector<std::string>& x) { scorer.score(x); }, inputs,
                                  runs > 0 ? runs : cfg.eval.bench_runs);
  std::cout << std::fixed << std::setprecision(1) << kind << ": " << t.mean << " +/- " << t.stddev
            << " chunks/sec over " << t.per_run.size() << " runs (" << inputs.size() << " chunks)\n";
  if (!out.empty()) {
    io::atomic_write_string(out, json{{"model", kind},
                                      {"chunks", inputs.size()},
                                      {"chunks_per_sec_mean", t.mean},
                                      {"chunks_per_sec_stddev", t.stddev},
                                      {"per_run", t.per_run}}
                                     .dump(2) +
                                     "\n");
  }
  return 0;
}

int cmd_gen_synthetic(const Globals& g, const std::string& out, int n_pos, int n_neg,
                      const std::vector<std::string>& keywords) {
  const auto cfg = load(g);
  const auto pages = gen_synthetic_corpus(keywords.empty() ? cfg.synthetic.keywords : keywords,
                                          n_pos >= 0 ? n_pos : cfg.synthetic.n_pos,
                                          n_neg >= 0 ? n_neg : cfg.synthetic.n_neg, cfg.seed);
  const auto dest = or_default(out, cfg.paths.corpus);
  save_corpus(pages, dest);
  std::cout << pages.size() << " synthetic pages -> " << dest.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"webtopic: detect topic-related web pages"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string config;
  app.add_option("-c,--config", config, "TOML pipeline config");
  app.add_option("--set", g.overrides, "override a config value, e.g. --set chunker.max_tokens=256")->take_all();
  app.add_option("-j,--jobs", g.jobs, "worker threads")->check(CLI::Range(1, 1024));

  std::function<int()> action;
  // flags shared by several commands
  struct Common {
    std::string corpus, splits, chunks, out, model, endpoint, split = "test", chunk_out;
  };
  auto common = std::make_shared<Common>();
  auto add_data = [&](CLI::App* c) {
    c->add_option("--corpus", common->corpus, "corpus JSONL (default paths.corpus)");
    c->add_option("--splits", common->splits, "split manifest (default paths.splits)");
    c->add_option("--chunks", common->chunks, "chunks JSONL (default paths.chunks)");
  };

  std::string in_path;
  bool refetch = false;
  std::size_t k = 0;
  std::string sampler_kind;
  std::string kind;
  int n_pos = -1, n_neg = -1, runs = 0;
  std::size_t limit = 0;
  std::vector<std::string> keywords, preds;
  std::string level = "document", a_path, b_path, pack_path, responses_path, report_model = "model";

  auto* ingest = app.add_subcommand("ingest", "annotated URL list (CSV or JSONL) -> corpus");
  ingest->add_option("--in", in_path, "annotations: url,label[,confidence,source,id,topic]")->required();
  ingest->add_option("--out", common->out, "corpus JSONL (default paths.corpus)");
  ingest->callback([&] { action = [&] { return cmd_ingest(g, in_path, common->out); }; });

  auto* fetch = app.add_subcommand("fetch", "download HTML for pages not yet fetched");
  fetch->add_option("--in", in_path, "input corpus")->required();
  fetch->add_option("--out", common->out, "output corpus")->required();
  fetch->add_flag("--refetch", refetch, "fetch every page again");
  fetch->callback([&] { action = [&] { return cmd_fetch(g, in_path, common->out, refetch); }; });

  auto* extract = app.add_subcommand("extract", "HTML -> plain text");
  extract->add_option("--in", in_path, "input corpus")->required();
  extract->add_option("--out", common->out, "output corpus")->required();
  extract->callback([&] { action = [&] { return cmd_extract(g, in_path, common->out); }; });

  auto* chunk = app.add_subcommand("chunk", "split page text into token-bounded chunks");
  chunk->add_option("--corpus", common->corpus);
  chunk->add_option("--out", common->out, "chunks JSONL (default paths.chunks)");
  chunk->callback([&] { action = [&] { return cmd_chunk(g, common->corpus, common->out); }; });

  auto* split = app.add_subcommand("split", "build train/test/unbl/extd manifest");
  split->add_option("--corpus", common->corpus);
  split->add_option("--out", common->out, "manifest JSONL (default paths.splits)");
  split->callback([&] { action = [&] { return cmd_split(g, common->corpus, common->out); }; });

  auto* sample = app.add_subcommand("sample", "draw k high-confidence negatives with a sampler");
  sample->add_option("--corpus", common->corpus);
  sample->add_option("-k", k, "number of negatives")->required();
  sample->add_option("--sampler", sampler_kind, "random, stratified or cluster (default sampler.kind)");
  sample->add_option("--out", common->out, "page id JSONL")->required();
  sample->callback([&] { action = [&] { return cmd_sample(g, common->corpus, k, sampler_kind, common->out); }; });

  auto* train_baseline = app.add_subcommand("train-baseline", "train the SVM or LIB baseline on the train split");
  train_baseline->add_option("kind", kind)->required()->check(CLI::IsMember({"svm", "lib"}));
  add_data(train_baseline);
  train_baseline->add_option("--out", common->out, "model JSON (default paths.models/<kind>.json)");
  train_baseline->callback([&] {
    action = [&] {
      return cmd_train_baseline(g, kind, common->corpus, common->splits, common->chunks, common->out);
    };
  });

  auto* train_neural = app.add_subcommand("train-neural", "fine-tune a model through the backend");
  add_data(train_neural);
  train_neural->add_option("--endpoint", common->endpoint, "stdio:<cmd> or http://host:port");
  train_neural->add_option("--out", common->out, "model handle JSON (default paths.models/neural.json)");
  train_neural->callback([&] {
    action = [&] {
      return cmd_train_neural(g, common->endpoint, common->corpus, common->splits, common->chunks, common->out);
    };
  });

  auto* classify = app.add_subcommand("classify", "score chunks and aggregate to document predictions");
  classify->add_option("kind", kind)->required()->check(CLI::IsMember({"svm", "lib", "neural", "icl"}));
  add_data(classify);
  classify->add_option("--model", common->model, "model file (default paths.models/<kind>.json)");
  classify->add_option("--split", common->split, "train, test, unbl, extd, unbalanced or complete");
  classify->add_option("--endpoint", common->endpoint);
  classify->add_option("--out", common->out, "document predictions (default paths.predictions/<kind>_<split>.jsonl)");
  classify->add_option("--chunk-out", common->chunk_out, "also write chunk-level predictions");
  classify->callback([&] {
    action = [&] {
      return cmd_classify(g, kind, common->model, common->split, common->endpoint, common->corpus, common->splits,
                          common->chunks, common->out, common->chunk_out);
    };
  });

  auto* prompt_pack = app.add_subcommand("prompt-pack", "export ICL prompts as JSONL for offline generation");
  add_data(prompt_pack);
  prompt_pack->add_option("--split", common->split);
  prompt_pack->add_option("--endpoint", common->endpoint, "needed for knn demonstrators");
  prompt_pack->add_option("--out", common->out);
  prompt_pack->callback([&] {
    action = [&] {
      return cmd_prompt_pack(g, common->split, common->endpoint, common->corpus, common->splits, common->chunks,
                             common->out);
    };
  });

  auto* parse = app.add_subcommand("parse-responses", "turn offline generations into predictions");
  parse->add_option("--pack", pack_path)->required();
  parse->add_option("--responses", responses_path, "JSONL of {page_id, index, text}")->required();
  parse->add_option("--corpus", common->corpus);
  parse->add_option("--out", common->out)->required();
  parse->callback([&] {
    action = [&] { return cmd_parse_responses(g, pack_path, responses_path, common->corpus, common->out); };
  });

  auto* eval = app.add_subcommand("eval", "metrics, PR curves and report files");
  eval->add_option("--pred", preds, "NAME=predictions.jsonl, once per evaluated split")->required();
  eval->add_option("--model", report_model, "model name for the report");
  eval->add_option("--out", common->out, "report directory (default paths.reports/<model>)");
  eval->callback([&] { action = [&] { return cmd_eval(g, preds, report_model, common->out); }; });

  auto* compare = app.add_subcommand("compare", "McNemar test between two prediction files");
  compare->add_option("a", a_path)->required();
  compare->add_option("b", b_path)->required();
  compare->add_option("--level", level)->check(CLI::IsMember({"document", "chunk"}));
  compare->add_option("--out", common->out, "result JSON");
  compare->callback([&] { action = [&] { return cmd_compare(g, a_path, b_path, level, common->out); }; });

  auto* bench = app.add_subcommand("bench", "chunk scoring throughput");
  bench->add_option("kind", kind)->required()->check(CLI::IsMember({"svm", "lib", "neural"}));
  add_data(bench);
  bench->add_option("--model", common->model);
  bench->add_option("--split", common->split);
  bench->add_option("--runs", runs, "default eval.bench_runs")->check(CLI::Range(1, 1000));
  bench->add_option("--limit", limit, "use at most this many chunks");
  bench->add_option("--endpoint", common->endpoint);
  bench->add_option("--out", common->out, "result JSON");
  bench->callback([&] {
    action = [&] {
      return cmd_bench(g, kind, common->model, common->split, runs, limit, common->endpoint, common->corpus,
                       common->splits, common->chunks, common->out);
    };
  });

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic keyword corpus");
  gen->add_option("--out", common->out, "corpus JSONL (default paths.corpus)");
  gen->add_option("--n-pos", n_pos)->check(CLI::NonNegativeNumber);
  gen->add_option("--n-neg", n_neg)->check(CLI::NonNegativeNumber);
  gen->add_option("--keywords", keywords)->delimiter(',');
  gen->callback([&] { action = [&] { return cmd_gen_synthetic(g, common->out, n_pos, n_neg, keywords); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (!config.empty()) g.config = config;

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const TransportError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
