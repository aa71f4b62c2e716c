#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/error.hpp"
#include "webtopic/html.hpp"
#include "webtopic/io.hpp"
#include "webtopic/random.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

using json = nlohmann::json;

enum class Label { negative, positive };
enum class Confidence { high, low };
enum class Source { panel, augmented, synthetic };

inline std::string_view to_string(Label l) { return l == Label::positive ? "positive" : "negative"; }
inline std::string_view to_string(Confidence c) { return c == Confidence::high ? "high" : "low"; }
inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::panel: return "panel";
    case Source::augmented: return "augmented";
    case Source::synthetic: return "synthetic";
  }
  return "panel";
}

inline Label parse_label(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  throw InputError("unknown label '" + std::string(s) + "'");
}
inline Confidence parse_confidence(std::string_view s) {
  if (s == "high") return Confidence::high;
  if (s == "low") return Confidence::low;
  throw InputError("unknown confidence '" + std::string(s) + "'");
}
inline Source parse_source(std::string_view s) {
  if (s == "panel") return Source::panel;
  if (s == "augmented") return Source::augmented;
  if (s == "synthetic") return Source::synthetic;
  throw InputError("unknown source '" + std::string(s) + "'");
}

struct FetchStatus {
  enum class Kind { ok, http_error, timeout, too_large, not_fetched };
  Kind kind = Kind::not_fetched;
  int http_code = 0;  // meaningful for http_error; 0 means no HTTP response at all

  static FetchStatus ok() { return {Kind::ok, 0}; }
  static FetchStatus http_error(int code) { return {Kind::http_error, code}; }
  static FetchStatus timeout() { return {Kind::timeout, 0}; }
  static FetchStatus too_large() { return {Kind::too_large, 0}; }
  static FetchStatus not_fetched() { return {Kind::not_fetched, 0}; }

  friend bool operator==(const FetchStatus&, const FetchStatus&) = default;
};

/// "ok", "timeout", "too_large", "not_fetched" or "http_error:<code>".
inline std::string to_string(const FetchStatus& s) {
  switch (s.kind) {
    case FetchStatus::Kind::ok: return "ok";
    case FetchStatus::Kind::timeout: return "timeout";
    case FetchStatus::Kind::too_large: return "too_large";
    case FetchStatus::Kind::not_fetched: return "not_fetched";
    case FetchStatus::Kind::http_error: return "http_error:" + std::to_string(s.http_code);
  }
  return "not_fetched";
}

inline FetchStatus parse_fetch_status(std::string_view s) {
  if (s == "ok") return FetchStatus::ok();
  if (s == "timeout") return FetchStatus::timeout();
  if (s == "too_large") return FetchStatus::too_large();
  if (s == "not_fetched") return FetchStatus::not_fetched();
  constexpr std::string_view prefix = "http_error:";
  if (s.starts_with(prefix)) {
    const std::string code(s.substr(prefix.size()));
    try {
      std::size_t used = 0;
      const int value = std::stoi(code, &used);
      if (used == code.size()) return FetchStatus::http_error(value);
    } catch (const std::exception&) {
    }
  }
  throw InputError("unknown fetch_status '" + std::string(s) + "'");
}

/// One scraped URL.
struct WebPage {
  std::string id;
  std::string url;
  std::string topic;
  std::optional<std::string> html;
  std::optional<std::string> text;
  Label label = Label::negative;
  Confidence confidence = Confidence::high;
  Source source = Source::panel;
  FetchStatus fetch_status;

  friend bool operator==(const WebPage&, const WebPage&) = default;
};

/// Throws InputError if the page violates the record invariants.
inline void validate(const WebPage& p) {
  if (p.id.empty()) throw InputError("page has empty id");
  if (p.text && !p.html) throw InputError("page " + p.id + ": text present without html");
  if (p.source == Source::augmented && p.label != Label::positive) {
    throw InputError("page " + p.id + ": augmented pages must be positive");
  }
}

namespace detail {

inline constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::string_view in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                            (static_cast<unsigned char>(in[i + 1]) << 8) |
                            static_cast<unsigned char>(in[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < in.size()) {
    std::uint32_t v = static_cast<unsigned char>(in[i]) << 16;
    if (i + 1 < in.size()) v |= static_cast<unsigned char>(in[i + 1]) << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < in.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view in) {
  if (in.size() % 4 != 0) throw InputError("invalid base64 length");
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = in[i + j];
      std::uint32_t d = 0;
      if (c == '=') {
        ++pad;
      } else {
        const auto pos = kB64.find(c);
        if (pos == std::string_view::npos || pad) throw InputError("invalid base64 character");
        d = static_cast<std::uint32_t>(pos);
      }
      v = (v << 6) | d;
    }
    if (pad > 2 || (pad && i + 4 != in.size())) throw InputError("invalid base64 padding");
    out += static_cast<char>((v >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(v & 0xFF);
  }
  return out;
}

}  // namespace detail

/// JSON record for one page. Raw HTML that is not valid UTF-8 is stored under
/// "html_base64" instead of "html" so the bytes survive the round trip.
inline json to_json(const WebPage& p) {
  json j;
  j["id"] = p.id;
  j["url"] = p.url;
  j["topic"] = p.topic;
  if (p.html) {
    if (unicode::is_valid_utf8(*p.html)) {
      j["html"] = *p.html;
    } else {
      j["html_base64"] = detail::base64_encode(*p.html);
    }
  } else {
    j["html"] = nullptr;
  }
  j["text"] = p.text ? json(*p.text) : json(nullptr);
  j["label"] = to_string(p.label);
  j["confidence"] = to_string(p.confidence);
  j["source"] = to_string(p.source);
  j["fetch_status"] = to_string(p.fetch_status);
  return j;
}

inline WebPage page_from_json(const json& j) {
  WebPage p;
  p.id = j.at("id").get<std::string>();
  p.url = j.at("url").get<std::string>();
  p.topic = j.at("topic").get<std::string>();
  if (j.contains("html_base64")) {
    p.html = detail::base64_decode(j.at("html_base64").get<std::string>());
  } else if (j.contains("html") && !j.at("html").is_null()) {
    p.html = j.at("html").get<std::string>();
  }
  if (j.contains("text") && !j.at("text").is_null()) p.text = j.at("text").get<std::string>();
  p.label = parse_label(j.at("label").get<std::string>());
  p.confidence = parse_confidence(j.at("confidence").get<std::string>());
  p.source = parse_source(j.at("source").get<std::string>());
  p.fetch_status = parse_fetch_status(j.at("fetch_status").get<std::string>());
  validate(p);
  return p;
}

inline void write_corpus(std::ostream& out, const std::vector<WebPage>& pages) {
  for (const auto& p : pages) {
    out << to_json(p).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

/// One JSON object per line, UTF-8.
inline void save_corpus(const std::vector<WebPage>& pages, const std::filesystem::path& path) {
  io::atomic_write(path, [&](std::ostream& out) { write_corpus(out, pages); });
}

inline std::vector<WebPage> load_corpus(const std::filesystem::path& path) {
  std::vector<WebPage> pages;
  io::for_each_jsonl(path, [&](const json& j, std::size_t line) {
    try {
      pages.push_back(page_from_json(j));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return pages;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace detail {

inline const std::vector<std::string_view>& filler_words() {
  static const std::vector<std::string_view> words = {
      "die",      "der",       "und",      "mit",       "heute",    "neue",     "bericht",
      "informationen", "mehr", "alle",     "jahr",      "zeit",     "stadt",    "land",
      "menschen", "aktuell",   "woche",    "thema",     "frage",    "antwort",  "leben",
      "familie",  "nachrichten", "region", "beitrag",   "artikel",  "seite",    "hilfe",
      "uebersicht", "tipps",   "experten", "meinung",   "zukunft",  "start",    "ende",
      "morgen",   "abend",     "grosse",   "kleine",    "wichtig",  "einfach",  "schnell",
  };
  return words;
}

inline const std::vector<std::string_view>& distractor_words() {
  static const std::vector<std::string_view> words = {
      "wetter",   "fussball",  "rezept",   "urlaub",    "auto",     "kochen",   "garten",
      "musik",    "film",      "reise",    "sport",     "computer", "handy",    "mode",
      "wohnung",  "karriere",  "bank",     "versicherung", "spiel", "buch",     "kino",
      "konzert",  "bahn",      "flug",     "hotel",     "strand",   "berg",     "fahrrad",
      "tennis",   "serie",     "kredit",   "aktie",     "boerse",   "mietvertrag", "smartphone",
      "laptop",   "kamera",    "hund",     "katze",     "pizza",    "kuchen",   "wandern",
      "skifahren", "formel",   "bundesliga", "tarif",   "gutschein", "angebot", "rabatt",
      "schuhe",   "jacke",     "moebel",   "kueche",    "badezimmer", "werkstatt", "reifen",
  };
  return words;
}

inline const std::vector<std::string_view>& section_words() {
  static const std::vector<std::string_view> words = {
      "news", "artikel", "magazin", "ratgeber", "blog", "themen", "lokales", "service", "forum",
  };
  return words;
}

inline bool overlaps_keyword(std::string_view word, const std::vector<std::string>& keywords) {
  for (const auto& k : keywords) {
    if (k.empty()) continue;
    if (word.find(k) != std::string_view::npos || k.find(word) != std::string::npos) return true;
  }
  return false;
}

inline std::string hyphenate(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), ' ', '-');
  return out;
}

}  // namespace detail

/// Deterministic stand-in for a scraped, annotated corpus.
///
/// Positive pages carry the topic keywords both in an SEO-style hyphenated URL
/// slug and in their body text. Negative pages draw topical words from a
/// distractor vocabulary disjoint from the keywords; about one in eight of
/// them also contains a near-miss token (a keyword prefix glued to another
/// word). Hosts follow a skewed distribution so a few domains dominate, and
/// every page carries the same navigation boilerplate.
inline std::vector<WebPage> gen_synthetic_corpus(const std::vector<std::string>& topic_keywords,
                                                 int n_pos, int n_neg, std::uint64_t seed) {
  if (n_pos < 0 || n_neg < 0) throw InputError("page counts must be non-negative");
  std::vector<std::string> keywords;
  for (const auto& k : topic_keywords) {
    auto lower = unicode::to_lower(k);
    if (!lower.empty()) keywords.push_back(std::move(lower));
  }
  if (n_pos > 0 && keywords.empty()) throw InputError("keywords required for positive pages");

  std::vector<std::string_view> filler;
  std::vector<std::string_view> distractor;
  for (auto w : detail::filler_words()) {
    if (!detail::overlaps_keyword(w, keywords)) filler.push_back(w);
  }
  for (auto w : detail::distractor_words()) {
    if (!detail::overlaps_keyword(w, keywords)) distractor.push_back(w);
  }
  const auto& sections = detail::section_words();

  Rng rng(seed);
  auto pick = [&rng](const auto& v) -> std::string { return std::string(v[rng.below(v.size())]); };

  constexpr int kHosts = 300;
  auto draw_host = [&]() {
    // three dominant domains take ~40% of pages
    if (rng.uniform() < 0.4) return "portal" + std::to_string(rng.below(3)) + ".de";
    return "site" + std::to_string(rng.below(kHosts)) + ".de";
  };

  const std::string topic = keywords.empty() ? std::string("synthetic") : keywords.front();

  auto near_miss = [&]() {
    const std::string& k = keywords.empty() ? std::string("topic") : keywords[rng.below(keywords.size())];
    const std::size_t keep = std::max<std::size_t>(2, (k.size() + 1) / 2);
    return k.substr(0, std::min(keep, k.size() > 2 ? k.size() - 1 : k.size())) + pick(distractor);
  };

  auto make_page = [&](bool positive) {
    std::vector<std::string> slug;
    std::string body;
    if (positive) {
      slug.push_back(pick(filler));
      slug.push_back(detail::hyphenate(keywords[rng.below(keywords.size())]));
      slug.push_back(pick(filler));
      if (rng.uniform() < 0.5) slug.push_back(pick(filler));
    } else {
      slug.push_back(pick(filler));
      slug.push_back(pick(distractor));
      slug.push_back(pick(distractor));
      if (rng.uniform() < 0.5) slug.push_back(pick(filler));
    }
    const bool with_near_miss = !positive && rng.below(8) == 0;

    const int paragraphs = 1 + static_cast<int>(rng.below(4));
    for (int p = 0; p < paragraphs; ++p) {
      std::string para;
      const int words = 20 + static_cast<int>(rng.below(60));
      for (int w = 0; w < words; ++w) {
        std::string word;
        const double u = rng.uniform();
        if (positive && (w == 0 || u < 0.12)) {
          word = keywords[rng.below(keywords.size())];
        } else if (u < 0.3) {
          word = pick(distractor);
        } else {
          word = pick(filler);
        }
        if (!para.empty()) para += ' ';
        para += word;
      }
      if (with_near_miss && p == 0) para += ' ' + near_miss();
      body += "<p>" + para + ".</p>";
    }

    std::string path = "/" + pick(sections) + "/";
    for (std::size_t i = 0; i < slug.size(); ++i) {
      if (i) path += '-';
      path += slug[i];
    }
    WebPage page;
    page.url = "https://" + draw_host() + path;
    page.topic = topic;
    page.html = "<!DOCTYPE html><html><head><title>" + slug[1] +
                "</title><script>var consent = true;</script></head><body>"
                "<nav><a href=\"/\">Startseite</a> <a href=\"/kontakt\">Kontakt</a> "
                "<a href=\"/impressum\">Impressum</a></nav><main>" +
                body + "</main><footer>Datenschutz Cookies</footer></body></html>";
    page.text = extract_text(*page.html);
    page.label = positive ? Label::positive : Label::negative;
    page.confidence = Confidence::high;
    page.source = Source::synthetic;
    page.fetch_status = FetchStatus::ok();
    return page;
  };

  std::vector<WebPage> pages;
  pages.reserve(static_cast<std::size_t>(n_pos) + static_cast<std::size_t>(n_neg));
  for (int i = 0; i < n_pos; ++i) pages.push_back(make_page(true));
  for (int i = 0; i < n_neg; ++i) pages.push_back(make_page(false));
  rng.shuffle(pages);
  for (std::size_t i = 0; i < pages.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    pages[i].id = topic + "-" + buf;
  }
  return pages;
}

}  // namespace webtopic
