#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "webtopic/unicode.hpp"

namespace webtopic {

namespace detail {

inline bool iequals_prefix(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

inline bool is_raw_text_element(std::string_view name) {
  return name == "script" || name == "style" || name == "noscript" || name == "template" ||
         name == "svg" || name == "iframe" || name == "object";
}

inline bool is_block_element(std::string_view name) {
  static constexpr std::array<std::string_view, 42> kBlocks = {
      "address", "article", "aside",   "blockquote", "body",    "br",     "caption",
      "dd",      "details", "dialog",  "div",        "dl",      "dt",     "fieldset",
      "figcaption", "figure", "footer", "form",      "h1",      "h2",     "h3",
      "h4",      "h5",      "h6",      "head",       "header",  "hr",     "html",
      "li",      "main",    "nav",     "ol",         "option",  "p",      "pre",
      "section", "summary", "table",   "td",         "th",      "title",  "tr"};
  return std::find(kBlocks.begin(), kBlocks.end(), name) != kBlocks.end() || name == "ul";
}

inline void decode_entity(std::string_view s, std::size_t& pos, std::string& out) {
  // s[pos] == '&'
  const std::size_t semi = s.find(';', pos + 1);
  if (semi == std::string_view::npos || semi - pos > 10) {
    out.push_back('&');
    ++pos;
    return;
  }
  const std::string_view name = s.substr(pos + 1, semi - pos - 1);
  char32_t cp = 0;
  if (!name.empty() && name[0] == '#') {
    std::uint32_t value = 0;
    bool ok = name.size() > 1;
    const bool hex = ok && (name[1] == 'x' || name[1] == 'X');
    for (std::size_t i = hex ? 2 : 1; ok && i < name.size(); ++i) {
      const auto c = static_cast<unsigned char>(name[i]);
      if (hex && std::isxdigit(c)) {
        value = value * 16 + (std::isdigit(c) ? c - '0' : std::tolower(c) - 'a' + 10);
      } else if (!hex && std::isdigit(c)) {
        value = value * 10 + (c - '0');
      } else {
        ok = false;
      }
      if (value > 0x10FFFF) ok = false;
    }
    if (hex && name.size() == 2) ok = false;
    cp = ok ? static_cast<char32_t>(value) : 0;
  } else {
    static constexpr std::array<std::pair<std::string_view, char32_t>, 17> kNamed = {{
        {"amp", '&'},     {"lt", '<'},      {"gt", '>'},      {"quot", '"'},
        {"apos", '\''},   {"nbsp", ' '},    {"auml", 0xE4},   {"ouml", 0xF6},
        {"uuml", 0xFC},   {"Auml", 0xC4},   {"Ouml", 0xD6},   {"Uuml", 0xDC},
        {"szlig", 0xDF},  {"euro", 0x20AC}, {"ndash", 0x2013}, {"mdash", 0x2014},
        {"hellip", 0x2026},
    }};
    for (const auto& [n, c] : kNamed) {
      if (n == name) cp = c;
    }
  }
  if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF)) {
    out.push_back('&');
    ++pos;
    return;
  }
  unicode::append_utf8(out, cp);
  pos = semi + 1;
}

}  // namespace detail

/// Visible plain text of an HTML document.
///
/// script/style/noscript (and other non-rendered containers) are dropped with
/// their contents, tags are stripped, block-level elements start a new line,
/// whitespace inside a line collapses to one space, and blank lines vanish.
/// Malformed markup is handled best-effort; this never throws.
inline std::string extract_text(std::string_view raw_html) {
  const std::string html = unicode::sanitize_utf8(raw_html);
  const std::string_view s = html;

  constexpr char kBlockMark = '\x1E';
  std::string flat;  // text with kBlockMark at block boundaries
  flat.reserve(s.size() / 2);
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '&') {
      detail::decode_entity(s, i, flat);
      continue;
    }
    if (c != '<') {
      flat.push_back(c == kBlockMark ? ' ' : c);
      ++i;
      continue;
    }
    // comment
    if (s.compare(i, 4, "<!--") == 0) {
      const std::size_t end = s.find("-->", i + 4);
      i = end == std::string_view::npos ? s.size() : end + 3;
      continue;
    }
    // doctype, CDATA, processing instructions
    if (i + 1 < s.size() && (s[i + 1] == '!' || s[i + 1] == '?')) {
      const std::size_t end = s.find('>', i + 2);
      i = end == std::string_view::npos ? s.size() : end + 1;
      continue;
    }
    std::size_t j = i + 1;
    const bool closing = j < s.size() && s[j] == '/';
    if (closing) ++j;
    const std::size_t name_begin = j;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-')) ++j;
    if (j == name_begin) {
      // a lone '<' in text, e.g. "a < b"
      flat.push_back('<');
      ++i;
      continue;
    }
    std::string name(s.substr(name_begin, j - name_begin));
    for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));

    // skip attributes, honoring quotes
    char quote = 0;
    while (j < s.size()) {
      if (quote) {
        if (s[j] == quote) quote = 0;
      } else if (s[j] == '"' || s[j] == '\'') {
        quote = s[j];
      } else if (s[j] == '>') {
        break;
      }
      ++j;
    }
    const bool self_closing = j > 0 && j < s.size() && s[j - 1] == '/';
    i = j < s.size() ? j + 1 : s.size();

    if (!closing && !self_closing && detail::is_raw_text_element(name)) {
      const std::string close = "</" + name;
      std::size_t k = i;
      while (k < s.size() && !detail::iequals_prefix(s, k, close)) {
        k = s.find('<', k + 1);
        if (k == std::string_view::npos) k = s.size();
      }
      const std::size_t gt = k < s.size() ? s.find('>', k) : std::string_view::npos;
      i = gt == std::string_view::npos ? s.size() : gt + 1;
      continue;
    }
    if (detail::is_block_element(name)) {
      flat.push_back(kBlockMark);
    } else if (name == "img") {
      flat.push_back(' ');
    }
  }

  // normalize: collapse whitespace per line, drop empty lines
  std::string out;
  out.reserve(flat.size());
  std::string line;
  auto flush_line = [&] {
    while (!line.empty() && line.back() == ' ') line.pop_back();
    if (!line.empty()) {
      if (!out.empty()) out.push_back('\n');
      out += line;
    }
    line.clear();
  };
  bool pending_space = false;
  for (std::size_t p = 0; p < flat.size();) {
    const auto d = unicode::decode(flat, p);
    if (d.cp == static_cast<char32_t>(kBlockMark)) {
      flush_line();
      pending_space = false;
    } else if (unicode::is_space(d.cp)) {
      pending_space = !line.empty();
    } else {
      if (pending_space) line.push_back(' ');
      pending_space = false;
      line.append(flat, p, d.length);
    }
    p += d.length;
  }
  flush_line();
  return out;
}

}  // namespace webtopic
