#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/io.hpp"
#include "webtopic/protocol.hpp"

namespace webtopic {

/// One recorded exchange. `response` holds the reference backend's answer.
struct TranscriptEntry {
  json request;
  json response;
};

inline std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> out;
  io::for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("request"), j.at("response")});
  });
  return out;
}

/// Backend-independent checks on one response: id echo, ok flag, error text,
/// and per-op payload shape.
inline std::vector<std::string> conformance_problems(const json& request, const json& response) {
  std::vector<std::string> p;
  if (!response.is_object()) return {"response is not an object"};
  if (response.value("id", json()) != request.value("id", json())) p.push_back("id not echoed");
  if (!response.contains("ok") || !response["ok"].is_boolean()) {
    p.push_back("missing boolean ok");
    return p;
  }
  if (!response["ok"].get<bool>()) {
    if (!response.contains("error") || !response["error"].is_string()) p.push_back("error response without message");
    return p;
  }
  const std::string op = request.value("op", "");
  if (op == "info") {
    if (!response.contains("name") || !response["name"].is_string()) p.push_back("info: name");
    if (!response.contains("context_size") || !response["context_size"].is_number_integer()) p.push_back("info: context_size");
    if (response.value("num_labels", 0) != 2) p.push_back("info: num_labels must be 2");
  } else if (op == "train") {
    if (!response.contains("model") || !response["model"].is_string()) p.push_back("train: model id");
  } else if (op == "score") {
    const auto& texts = request.at("texts");
    if (!response.contains("scores") || !response["scores"].is_array() || response["scores"].size() != texts.size()) {
      p.push_back("score: one score per text");
    } else {
      for (const auto& s : response["scores"]) {
        if (!s.is_number() || !(s.get<double>() >= 0.0 && s.get<double>() <= 1.0)) p.push_back("score: value outside [0, 1]");
      }
    }
  } else if (op == "embed") {
    const auto& texts = request.at("texts");
    if (!response.contains("vectors") || !response["vectors"].is_array() || response["vectors"].size() != texts.size()) {
      p.push_back("embed: one vector per text");
    } else {
      std::size_t dim = 0;
      for (const auto& v : response["vectors"]) {
        if (!v.is_array() || v.empty()) {
          p.push_back("embed: empty vector");
          continue;
        }
        if (dim == 0) dim = v.size();
        if (v.size() != dim) p.push_back("embed: dimensions differ");
      }
    }
  } else if (op == "generate") {
    if (!response.contains("text") || !response["text"].is_string()) p.push_back("generate: text");
  } else {
    p.push_back("ok response to unknown op '" + op + "'");
  }
  return p;
}

/// Replays the transcript. Shape conformance is always required; with
/// `exact`, responses must also equal the recorded ones (numbers to 1e-9).
inline std::vector<std::string> check_transcript(Transport& transport, const std::vector<TranscriptEntry>& entries,
                                                 bool exact) {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    json got;
    try {
      got = transport.call(e.request);
    } catch (const std::exception& ex) {
      problems.push_back("entry " + std::to_string(i) + ": " + ex.what());
      continue;
    }
    for (const auto& p : conformance_problems(e.request, got)) {
      problems.push_back("entry " + std::to_string(i) + ": " + p);
    }
    if (got.value("ok", false) != e.response.value("ok", true)) {
      problems.push_back("entry " + std::to_string(i) + ": ok flag differs from reference");
    }
    if (exact) {
      json a = got, b = e.response;
      a.erase("error");  // message wording is free
      b.erase("error");
      const auto diff = json::diff(a, b);
      for (const auto& d : diff) {
        const auto path = d.value("path", "");
        bool close = false;
        if (d.value("op", "") == "replace") {
          const auto ptr = json::json_pointer(path);
          if (a.contains(ptr) && a[ptr].is_number() && b[ptr].is_number()) {
            close = std::abs(a[ptr].get<double>() - b[ptr].get<double>()) <= 1e-9;
          }
        }
        if (!close) problems.push_back("entry " + std::to_string(i) + ": differs at " + path);
      }
    }
  }
  return problems;
}

}  // namespace webtopic
