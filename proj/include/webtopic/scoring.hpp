#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/protocol.hpp"
#include "webtopic/url.hpp"

namespace webtopic {

enum class FeatureMode { url_only, url_and_content };

inline std::string_view to_string(FeatureMode m) {
  return m == FeatureMode::url_only ? "url_only" : "url_and_content";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "url_only") return FeatureMode::url_only;
  if (s == "url_and_content") return FeatureMode::url_and_content;
  throw ConfigError("unknown feature_mode '" + std::string(s) + "'");
}

/// Classifier input for one chunk: URL path/query text, optionally followed by
/// a space and the chunk text.
inline std::string feature_text(const std::string& url, const std::string& chunk_text, FeatureMode mode) {
  std::string out = url_feature_text(url);
  if (mode == FeatureMode::url_and_content) {
    out += ' ';
    out += chunk_text;
  }
  return out;
}

/// Fine-tuning hyperparameters forwarded verbatim to the backend.
struct TrainConfig {
  double learning_rate = 2e-5;
  int max_epochs = 3;
  int warmup_steps = 500;
  double weight_decay = 0.01;
  int max_seq_tokens = 512;
  FeatureMode feature_mode = FeatureMode::url_and_content;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (c.warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (c.max_seq_tokens < 1) throw ConfigError("max_seq_tokens must be >= 1");
}

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"warmup_steps", c.warmup_steps},   {"weight_decay", c.weight_decay},
          {"max_seq_tokens", c.max_seq_tokens}, {"feature_mode", to_string(c.feature_mode)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  for (const char* key : {"learning_rate", "max_epochs", "warmup_steps", "weight_decay", "max_seq_tokens",
                          "feature_mode"}) {
    if (!j.contains(key)) throw InputError(std::string("train config lacks '") + key + "'");
  }
  try {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.max_seq_tokens = j.at("max_seq_tokens").get<int>();
    c.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw InputError(std::string("train config has a field of the wrong type: ") + e.what());
  }
  return c;
}

struct GenerationParams {
  double temperature = 0.3;
  int top_k = 50;
  double top_p = 0.95;
  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

inline void validate(const GenerationParams& g) {
  if (!(g.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (g.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(g.top_p > 0.0 && g.top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
}

struct BackendInfo {
  std::string name;
  int context_size = 0;
  int num_labels = 0;
};

/// Typed client over a Transport. Assigns request ids, checks "ok" and the
/// shape of each response, and batches score/embed calls.
class BackendClient {
 public:
  static constexpr std::size_t kDefaultBatch = 64;

  explicit BackendClient(std::unique_ptr<Transport> t, std::size_t batch = kDefaultBatch)
      : transport_(std::move(t)), batch_(std::max<std::size_t>(1, batch)) {}

  static BackendClient connect(const std::string& endpoint, std::size_t batch = kDefaultBatch) {
    return BackendClient(make_transport(endpoint), batch);
  }

  std::size_t batch_size() const { return batch_; }

  BackendInfo info() {
    const auto r = call({{"op", "info"}});
    BackendInfo out;
    try {
      out.name = r.at("name").get<std::string>();
      out.context_size = r.at("context_size").get<int>();
      out.num_labels = r.at("num_labels").get<int>();
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed info response: ") + e.what());
    }
    return out;
  }

  /// Sends a train request; returns the backend's model id.
  std::string train(const std::vector<std::pair<std::string, Label>>& examples, const TrainConfig& cfg) {
    validate(cfg);
    if (examples.empty()) throw InputError("train dataset is empty");
    json ex = json::array();
    for (const auto& [text, label] : examples) ex.push_back({{"text", text}, {"label", to_string(label)}});
    const auto r = call({{"op", "train"}, {"config", to_json(cfg)}, {"examples", std::move(ex)}});
    if (!r.contains("model") || !r["model"].is_string()) throw ProtocolError("train response lacks model id");
    return r["model"].get<std::string>();
  }

  /// One probability in [0, 1] per text, order preserved.
  std::vector<double> score(const std::string& model, const std::vector<std::string>& texts) {
    std::vector<json> requests;
    for (std::size_t b = 0; b < texts.size(); b += batch_) {
      const auto e = std::min(texts.size(), b + batch_);
      requests.push_back({{"op", "score"}, {"model", model},
                          {"texts", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(b),
                                                             texts.begin() + static_cast<std::ptrdiff_t>(e))}});
    }
    const auto responses = call_many(std::move(requests));
    std::vector<double> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const auto& r = responses[i];
      const auto expected = std::min(batch_, texts.size() - i * batch_);
      if (!r.contains("scores") || !r["scores"].is_array() || r["scores"].size() != expected) {
        throw ProtocolError("score response has " +
                            std::to_string(r.contains("scores") ? r["scores"].size() : 0) +
                            " scores for " + std::to_string(expected) + " texts");
      }
      for (const auto& s : r["scores"]) {
        if (!s.is_number()) throw ProtocolError("non-numeric score");
        const double v = s.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw ProtocolError("score outside [0, 1]: " + s.dump());
        out.push_back(v);
      }
    }
    return out;
  }

  /// One vector per text; all vectors share one dimension.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) {
    std::vector<json> requests;
    for (std::size_t b = 0; b < texts.size(); b += batch_) {
      const auto e = std::min(texts.size(), b + batch_);
      requests.push_back({{"op", "embed"},
                          {"texts", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(b),
                                                             texts.begin() + static_cast<std::ptrdiff_t>(e))}});
    }
    const auto responses = call_many(std::move(requests));
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const auto& r = responses[i];
      const auto expected = std::min(batch_, texts.size() - i * batch_);
      if (!r.contains("vectors") || !r["vectors"].is_array() || r["vectors"].size() != expected) {
        throw ProtocolError("embed response length does not match request");
      }
      for (const auto& v : r["vectors"]) {
        try {
          out.push_back(v.get<std::vector<double>>());
        } catch (const json::exception&) {
          throw ProtocolError("malformed embedding vector");
        }
        if (out.back().size() != out.front().size() || out.back().empty()) {
          throw ProtocolError("embedding dimensions differ");
        }
      }
    }
    return out;
  }

  std::string generate(const std::string& prompt, const GenerationParams& gen) {
    return generate_many({prompt}, gen).front();
  }

  std::vector<std::string> generate_many(const std::vector<std::string>& prompts, const GenerationParams& gen) {
    validate(gen);
    std::vector<json> requests;
    for (const auto& p : prompts) {
      requests.push_back({{"op", "generate"}, {"prompt", p}, {"temperature", gen.temperature},
                          {"top_k", gen.top_k}, {"top_p", gen.top_p}});
    }
    std::vector<std::string> out;
    for (const auto& r : call_many(std::move(requests))) {
      if (!r.contains("text") || !r["text"].is_string()) throw ProtocolError("generate response lacks text");
      out.push_back(r["text"].get<std::string>());
    }
    return out;
  }

  json call(json request) { return call_many({std::move(request)}).front(); }

  std::vector<json> call_many(std::vector<json> requests) {
    if (requests.empty()) return {};
    for (auto& r : requests) {
      json framed = {{"id", next_id_++}};
      framed.update(r);
      r = std::move(framed);
    }
    auto responses = transport_->call_many(requests);
    if (responses.size() != requests.size()) throw ProtocolError("backend returned wrong number of responses");
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const auto& r = responses[i];
      if (!r.is_object() || !r.contains("ok") || !r["ok"].is_boolean()) {
        throw ProtocolError("response lacks boolean ok field");
      }
      if (r.at("id") != requests[i].at("id")) throw ProtocolError("response id mismatch");
      if (!r["ok"].get<bool>()) {
        throw ProtocolError("backend error: " + r.value("error", std::string("unspecified")));
      }
    }
    return responses;
  }

 private:
  std::unique_ptr<Transport> transport_;
  std::size_t batch_;
  std::int64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Aggregation

struct ScoredDocument {
  std::string page_id;
  std::vector<double> chunk_scores;
  double doc_score = 0.0;
  Label predicted = Label::negative;
  double threshold = 0.5;
  bool no_content = false;
};

/// A document is positive iff at least one chunk reaches the threshold,
/// which is the same as its maximum chunk score reaching it.
inline ScoredDocument aggregate_document(std::string page_id, std::vector<double> chunk_scores,
                                         double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  ScoredDocument d;
  d.page_id = std::move(page_id);
  d.threshold = threshold;
  for (double s : chunk_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("chunk score outside [0, 1]");
  }
  d.chunk_scores = std::move(chunk_scores);
  if (d.chunk_scores.empty()) {
    d.no_content = true;
    return d;
  }
  d.doc_score = *std::max_element(d.chunk_scores.begin(), d.chunk_scores.end());
  d.predicted = d.doc_score >= threshold ? Label::positive : Label::negative;
  return d;
}

/// Maps a signed margin to (0, 1) so that margin >= 0 <=> score >= 0.5. With
/// `strict`, a margin of exactly 0 (or one too small to move the logistic)
/// maps below 0.5 instead.
inline double margin_to_score(double margin, bool strict = false) {
  double s = 1.0 / (1.0 + std::exp(-margin));
  if (strict ? margin <= 0.0 : margin < 0.0) s = std::min(s, std::nextafter(0.5, 0.0));
  else s = std::max(s, 0.5);
  return s;
}

}  // namespace webtopic
