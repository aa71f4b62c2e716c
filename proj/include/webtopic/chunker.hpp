#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/io.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

/// Byte range [begin, end) of one token in its source string.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Any callable that maps text to ordered, non-overlapping token spans.
/// Backend-specific subword tokenizers plug in here.
template <class T>
concept Tokenizer = requires(const T& t, std::string_view s) {
  { t(s) } -> std::convertible_to<std::vector<TokenSpan>>;
};

/// Maximal runs of word characters; every other non-space code point is a
/// token on its own.
struct DefaultTokenizer {
  std::vector<TokenSpan> operator()(std::string_view text) const {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    std::size_t word_begin = std::string_view::npos;
    while (i < text.size()) {
      const auto d = unicode::decode(text, i);
      if (unicode::is_word(d.cp)) {
        if (word_begin == std::string_view::npos) word_begin = i;
      } else {
        if (word_begin != std::string_view::npos) {
          out.push_back({word_begin, i});
          word_begin = std::string_view::npos;
        }
        if (!unicode::is_space(d.cp)) out.push_back({i, i + d.length});
      }
      i += d.length;
    }
    if (word_begin != std::string_view::npos) out.push_back({word_begin, text.size()});
    return out;
  }
};

template <Tokenizer T = DefaultTokenizer>
std::vector<std::string> tokenize(std::string_view text, const T& tokenizer = {}) {
  std::vector<std::string> out;
  for (const auto& span : tokenizer(text)) {
    out.emplace_back(text.substr(span.begin, span.end - span.begin));
  }
  return out;
}

struct ChunkerConfig {
  int max_tokens = 384;
  int overlap_tokens = 64;
  std::vector<std::string> separators = {"\n\n", "\n", ". ", " "};
};

inline void validate(const ChunkerConfig& cfg) {
  if (cfg.max_tokens < 1) throw ConfigError("chunker max_tokens must be >= 1");
  if (cfg.overlap_tokens < 0 || cfg.overlap_tokens >= cfg.max_tokens) {
    throw ConfigError("chunker overlap_tokens must be in [0, max_tokens)");
  }
  for (const auto& s : cfg.separators) {
    if (s.empty()) throw ConfigError("chunker separators must be non-empty strings");
  }
}

/// A chunk as a half-open range of document token indices.
struct TokenRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

namespace detail {

class RecursiveSplitter {
 public:
  RecursiveSplitter(std::string_view text, const std::vector<TokenSpan>& tokens,
                    const ChunkerConfig& cfg)
      : text_(text), tokens_(tokens), cfg_(cfg),
        max_(static_cast<std::size_t>(cfg.max_tokens)),
        overlap_(static_cast<std::size_t>(cfg.overlap_tokens)) {}

  std::vector<TokenRange> run() {
    std::vector<TokenRange> out;
    if (tokens_.empty()) return out;
    if (tokens_.size() <= max_) {
      out.push_back({0, tokens_.size()});
      return out;
    }
    split({0, tokens_.size()}, 0, text_.size(), 0, out);
    return out;
  }

 private:
  // first token whose begin offset is >= pos
  std::size_t token_at(std::size_t pos) const {
    return static_cast<std::size_t>(
        std::lower_bound(tokens_.begin(), tokens_.end(), pos,
                         [](const TokenSpan& t, std::size_t p) { return t.begin < p; }) -
        tokens_.begin());
  }

  void windows(TokenRange r, std::vector<TokenRange>& out) const {
    const std::size_t stride = max_ - overlap_;
    for (std::size_t s = r.first;; s += stride) {
      const std::size_t e = std::min(s + max_, r.last);
      out.push_back({s, e});
      if (e == r.last) break;
    }
  }

  // Splits an oversized range using separators[level] and below.
  void split(TokenRange r, std::size_t byte_begin, std::size_t byte_end, std::size_t level,
             std::vector<TokenRange>& out) const {
    if (level >= cfg_.separators.size()) {
      windows(r, out);
      return;
    }
    const std::string& sep = cfg_.separators[level];

    struct Piece {
      TokenRange tokens;
      std::size_t byte_begin, byte_end;
    };
    std::vector<Piece> pieces;
    std::size_t pos = byte_begin;
    while (pos < byte_end) {
      std::size_t hit = text_.find(sep, pos);
      std::size_t end = (hit == std::string_view::npos || hit + sep.size() > byte_end)
                            ? byte_end
                            : hit + sep.size();  // separator stays with the preceding piece
      const TokenRange tr{std::max(token_at(pos), r.first), std::min(token_at(end), r.last)};
      if (tr.last > tr.first) pieces.push_back({tr, pos, end});
      pos = end;
    }

    std::deque<TokenRange> group;
    std::size_t total = 0;
    auto emit_group = [&] {
      if (!group.empty()) out.push_back({group.front().first, group.back().last});
    };
    for (const auto& p : pieces) {
      const std::size_t n = p.tokens.size();
      if (n > max_) {
        emit_group();
        group.clear();
        total = 0;
        split(p.tokens, p.byte_begin, p.byte_end, level + 1, out);
        continue;
      }
      if (total + n > max_ && !group.empty()) {
        emit_group();
        // keep a tail of at most overlap_ tokens that still leaves room for p
        while (!group.empty() && (total > overlap_ || total + n > max_)) {
          total -= group.front().size();
          group.pop_front();
        }
      }
      group.push_back(p.tokens);
      total += n;
    }
    emit_group();
  }

  std::string_view text_;
  const std::vector<TokenSpan>& tokens_;
  const ChunkerConfig& cfg_;
  std::size_t max_;
  std::size_t overlap_;
};

}  // namespace detail

/// Splits text into token-bounded ranges.
///
/// Text is cut on separators[0]; pieces still above max_tokens are cut on the
/// next separator, and pieces that survive the last separator are cut into
/// windows of max_tokens with stride max_tokens - overlap_tokens. Adjacent
/// small pieces are merged greedily up to max_tokens, and each new merged
/// chunk starts with the trailing pieces (at most overlap_tokens tokens) of the
/// previous one.
inline std::vector<TokenRange> split_document_ranges(std::string_view text, const ChunkerConfig& cfg,
                                              const std::vector<TokenSpan>& tokens) {
  validate(cfg);
  return detail::RecursiveSplitter(text, tokens, cfg).run();
}

inline std::string range_text(std::string_view text, const std::vector<TokenSpan>& tokens,
                              TokenRange r) {
  const std::size_t b = tokens[r.first].begin;
  const std::size_t e = tokens[r.last - 1].end;
  return std::string(text.substr(b, e - b));
}

template <Tokenizer T = DefaultTokenizer>
std::vector<std::string> split_document(std::string_view text, const ChunkerConfig& cfg,
                                        const T& tokenizer = {}) {
  const auto tokens = tokenizer(text);
  std::vector<std::string> out;
  for (const auto& r : split_document_ranges(text, cfg, tokens)) {
    out.push_back(range_text(text, tokens, r));
  }
  return out;
}

/// Token-bounded slice of a page's text; inherits the page label.
struct Chunk {
  std::string page_id;
  int index = 0;
  std::string text;
  int token_count = 0;
  Label label = Label::negative;
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

template <Tokenizer T = DefaultTokenizer>
std::vector<Chunk> chunk_page(const WebPage& page, const ChunkerConfig& cfg,
                              const T& tokenizer = {}) {
  if (!page.text || page.text->empty()) {
    throw InputError("page " + page.id + ": no extracted text");
  }
  const std::string_view text = *page.text;
  const auto tokens = tokenizer(text);
  std::vector<Chunk> out;
  for (const auto& r : split_document_ranges(text, cfg, tokens)) {
    Chunk c;
    c.page_id = page.id;
    c.index = static_cast<int>(out.size());
    c.text = range_text(text, tokens, r);
    c.token_count = static_cast<int>(r.size());
    c.label = page.label;
    out.push_back(std::move(c));
  }
  return out;
}

inline json to_json(const Chunk& c) {
  return json{{"page_id", c.page_id},
              {"index", c.index},
              {"text", c.text},
              {"token_count", c.token_count},
              {"label", to_string(c.label)}};
}

inline Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.page_id = j.at("page_id").get<std::string>();
  c.index = j.at("index").get<int>();
  c.text = j.at("text").get<std::string>();
  c.token_count = j.at("token_count").get<int>();
  c.label = parse_label(j.at("label").get<std::string>());
  return c;
}

inline void save_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path) {
  io::atomic_write(path, [&](std::ostream& out) {
    for (const auto& c : chunks) {
      out << to_json(c).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
  });
}

inline std::vector<Chunk> load_chunks(const std::filesystem::path& path) {
  std::vector<Chunk> out;
  io::for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(chunk_from_json(j)); });
  return out;
}

}  // namespace webtopic
