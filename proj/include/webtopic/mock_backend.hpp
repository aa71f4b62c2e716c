#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/error.hpp"
#include "webtopic/scoring.hpp"
#include "webtopic/tfidf.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

/// Deterministic stand-in for a model runtime.
///
///  - score: 0.9 when the lowercased text contains a keyword, else 0.1
///  - embed: signed hashed bag of words, L2-normalized
///  - generate: looks at the text after the last "Text:" marker and answers
///    "Yes"/"No" by keyword (or always yes / no / an unparseable reply)
///  - train: validates the config and echoes it back with a model id
struct MockBackend {
  enum class Reply { keyword, always_yes, always_no, unparseable };

  std::vector<std::string> keywords = {"cannabis"};
  std::size_t embed_dim = 64;
  Reply reply = Reply::keyword;
  std::string name = "webtopic-mock";
  int context_size = 512;

  bool mentions_keyword(std::string_view text) const {
    const std::string lower = unicode::to_lower(text);
    for (const auto& k : keywords) {
      if (!k.empty() && lower.find(unicode::to_lower(k)) != std::string::npos) return true;
    }
    return false;
  }

  std::vector<double> embed_one(std::string_view text) const {
    std::vector<double> v(embed_dim, 0.0);
    for (const auto& tok : analyze(text)) {
      std::uint64_t h = 1469598103934665603ull;  // FNV-1a
      for (unsigned char c : tok) h = (h ^ c) * 1099511628211ull;
      v[h % embed_dim] += (h >> 63) ? -1.0 : 1.0;
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n == 0.0) {
      v[0] = 1.0;
      return v;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  }

  std::string answer(std::string_view prompt) const {
    switch (reply) {
      case Reply::always_yes: return "Yes";
      case Reply::always_no: return "No";
      case Reply::unparseable: return "It depends.";
      case Reply::keyword: break;
    }
    auto query = prompt;
    if (const auto at = prompt.rfind("Text:"); at != std::string_view::npos) query = prompt.substr(at + 5);
    if (const auto end = query.rfind("Answer:"); end != std::string_view::npos) query = query.substr(0, end);
    return mentions_keyword(query) ? "Yes" : "No";
  }

  json operator()(const json& request) const {
    const json id = request.value("id", json());
    const std::string op = request.value("op", "");
    json r = {{"id", id}, {"ok", true}};
    if (op == "info") {
      r["name"] = name;
      r["context_size"] = context_size;
      r["num_labels"] = 2;
    } else if (op == "train") {
      const auto cfg = train_config_from_json(request.at("config"));
      validate(cfg);
      const auto& ex = request.at("examples");
      if (!ex.is_array() || ex.empty()) throw InputError("train needs a nonempty examples array");
      r["model"] = "mock-" + std::to_string(ex.size());
      r["config"] = request.at("config");
    } else if (op == "score") {
      const auto model = request.at("model").get<std::string>();
      if (!model.starts_with("mock")) throw InputError("unknown model '" + model + "'");
      json scores = json::array();
      for (const auto& t : request.at("texts")) scores.push_back(mentions_keyword(t.get<std::string>()) ? 0.9 : 0.1);
      r["scores"] = scores;
    } else if (op == "embed") {
      json vectors = json::array();
      for (const auto& t : request.at("texts")) vectors.push_back(embed_one(t.get<std::string>()));
      r["vectors"] = vectors;
    } else if (op == "generate") {
      GenerationParams g;
      g.temperature = request.at("temperature").get<double>();
      g.top_k = request.at("top_k").get<int>();
      g.top_p = request.at("top_p").get<double>();
      validate(g);
      r["text"] = answer(request.at("prompt").get<std::string>());
    } else {
      throw InputError("unknown op '" + op + "'");
    }
    return r;
  }
};

}  // namespace webtopic
