#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "webtopic/error.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

struct ParsedUrl {
  std::string scheme = "http";
  std::string host;  // lowercase
  std::string port;  // empty when absent
  std::string path = "/";
  std::vector<std::pair<std::string, std::string>> query;
  std::string fragment;

  friend bool operator==(const ParsedUrl&, const ParsedUrl&) = default;
};

enum class UrlCategory {
  web_search,
  wikipedia,
  social_media,
  news_no_seo,
  seo_title,
  keyworded_domain,
  other,
};

inline std::string_view to_string(UrlCategory c) {
  switch (c) {
    case UrlCategory::web_search: return "web_search";
    case UrlCategory::wikipedia: return "wikipedia";
    case UrlCategory::social_media: return "social_media";
    case UrlCategory::news_no_seo: return "news_no_seo";
    case UrlCategory::seo_title: return "seo_title";
    case UrlCategory::keyworded_domain: return "keyworded_domain";
    case UrlCategory::other: return "other";
  }
  return "other";
}

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool valid_host_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '-' || c == '.' || c == '_' || u >= 0x80;
}

}  // namespace detail

/// Splits a URL into scheme, host, path and ordered query pairs. A missing
/// scheme defaults to http. Percent-encoding is kept verbatim.
inline ParsedUrl parse_url(std::string_view url) {
  const auto first = url.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw InputError("empty URL");
  const auto last = url.find_last_not_of(" \t\r\n");
  std::string_view s = url.substr(first, last - first + 1);
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u <= 0x20 || u == 0x7F) {
      throw InputError("invalid character in URL '" + std::string(s) + "'");
    }
  }

  ParsedUrl out;
  const auto scheme_end = s.find("://");
  if (scheme_end != std::string_view::npos) {
    const std::string_view scheme = s.substr(0, scheme_end);
    const bool ok = !scheme.empty() && std::isalpha(static_cast<unsigned char>(scheme[0])) &&
                    std::all_of(scheme.begin(), scheme.end(), [](char c) {
                      return std::isalnum(static_cast<unsigned char>(c)) || c == '+' ||
                             c == '-' || c == '.';
                    });
    // "://" inside the path or query is not a scheme separator
    const auto delim = s.find_first_of("/?#");
    if (ok && (delim == std::string_view::npos || delim > scheme_end)) {
      out.scheme = detail::ascii_lower(scheme);
      s.remove_prefix(scheme_end + 3);
    } else if (delim == std::string_view::npos || delim > scheme_end) {
      throw InputError("invalid URL scheme '" + std::string(scheme) + "'");
    }
  } else if (s.starts_with("//")) {
    s.remove_prefix(2);
  }

  const auto auth_end = s.find_first_of("/?#");
  std::string_view authority = s.substr(0, auth_end);
  s = auth_end == std::string_view::npos ? std::string_view{} : s.substr(auth_end);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority.remove_prefix(at + 1);
  }
  std::string_view host = authority;
  if (authority.starts_with('[')) {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) {
      throw InputError("unterminated IPv6 host '" + std::string(authority) + "'");
    }
    host = authority.substr(0, close + 1);
    const std::string_view rest = authority.substr(close + 1);
    if (!rest.empty()) {
      if (rest[0] != ':') throw InputError("invalid host '" + std::string(authority) + "'");
      out.port = std::string(rest.substr(1));
    }
  } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    out.port = std::string(authority.substr(colon + 1));
  }
  if (!std::all_of(out.port.begin(), out.port.end(),
                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      out.port.size() > 5) {
    throw InputError("invalid port '" + out.port + "'");
  }
  if (host.empty()) throw InputError("URL has no host: '" + std::string(url) + "'");
  if (!host.starts_with('[')) {
    for (char c : host) {
      if (!detail::valid_host_char(c)) {
        throw InputError("invalid host '" + std::string(host) + "'");
      }
    }
  }
  out.host = detail::ascii_lower(host);

  const auto frag = s.find('#');
  if (frag != std::string_view::npos) {
    out.fragment = std::string(s.substr(frag + 1));
    s = s.substr(0, frag);
  }
  const auto qmark = s.find('?');
  const std::string_view path = s.substr(0, qmark);
  out.path = path.empty() ? "/" : std::string(path);
  if (qmark != std::string_view::npos) {
    std::string_view q = s.substr(qmark + 1);
    while (!q.empty()) {
      const auto amp = q.find('&');
      const std::string_view pair = q.substr(0, amp);
      if (!pair.empty()) {
        const auto eq = pair.find('=');
        out.query.emplace_back(std::string(pair.substr(0, eq)),
                               eq == std::string_view::npos ? std::string{}
                                                            : std::string(pair.substr(eq + 1)));
      }
      if (amp == std::string_view::npos) break;
      q.remove_prefix(amp + 1);
    }
  }
  return out;
}

inline std::string reassemble(const ParsedUrl& p) {
  std::string out = p.scheme + "://" + p.host;
  if (!p.port.empty()) out += ":" + p.port;
  out += p.path;
  for (std::size_t i = 0; i < p.query.size(); ++i) {
    out += i == 0 ? '?' : '&';
    out += p.query[i].first;
    if (!p.query[i].second.empty()) out += "=" + p.query[i].second;
  }
  if (!p.fragment.empty()) out += "#" + p.fragment;
  return out;
}

/// Classifier input built from the path and query only. The host is left out
/// so models cannot key on specific domains.
inline std::string url_feature_text(const ParsedUrl& p) {
  std::string raw = p.path;
  for (const auto& [k, v] : p.query) {
    raw += ' ';
    raw += k;
    raw += '=';
    raw += v;
  }
  for (auto& c : raw) {
    if (c == '-' || c == '/' || c == '=') c = ' ';
  }
  const std::string lower = unicode::to_lower(raw);
  std::string out;
  out.reserve(lower.size());
  bool pending_space = false;
  for (char c : lower) {
    if (c == ' ' || c == '\t') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

inline std::string url_feature_text(std::string_view url) { return url_feature_text(parse_url(url)); }

struct UrlCategoryConfig {
  std::set<std::string> search_keys = {"q", "query", "search", "p"};
  int seo_min_tokens = 3;
  int seo_min_length = 15;
};

namespace detail {

inline std::string_view strip_www(std::string_view host) {
  if (host.starts_with("www.")) host.remove_prefix(4);
  return host;
}

inline bool host_matches(std::string_view host, std::string_view domain) {
  return host == domain ||
         (host.size() > domain.size() && host.ends_with(domain) &&
          host[host.size() - domain.size() - 1] == '.');
}

inline bool is_social_host(std::string_view host) {
  static constexpr std::string_view kSocial[] = {
      "facebook.com", "instagram.com", "twitter.com", "x.com",        "tiktok.com",
      "youtube.com",  "youtu.be",      "linkedin.com", "reddit.com",  "pinterest.com",
      "snapchat.com", "xing.com",      "tumblr.com",  "threads.net", "telegram.org",
      "t.me",         "whatsapp.com",  "vk.com",      "twitch.tv",   "mastodon.social",
  };
  for (auto d : kSocial) {
    if (host_matches(host, d)) return true;
  }
  return false;
}

}  // namespace detail

/// True when the last path segment reads like a hyphenated article title.
inline bool is_seo_path(std::string_view path, const UrlCategoryConfig& cfg = {}) {
  while (path.ends_with('/')) path.remove_suffix(1);
  std::string_view seg = path.substr(path.rfind('/') + 1);
  for (std::string_view ext : {".html", ".htm", ".php", ".aspx", ".asp", ".jsp"}) {
    if (seg.size() > ext.size() && detail::ascii_lower(seg.substr(seg.size() - ext.size())) == ext) {
      seg.remove_suffix(ext.size());
      break;
    }
  }
  int alpha_tokens = 0;
  std::size_t length = 0;
  std::size_t start = 0;
  while (start <= seg.size()) {
    const auto dash = seg.find('-', start);
    const std::string_view tok =
        seg.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start);
    bool alpha = !tok.empty();
    for (std::size_t i = 0; i < tok.size();) {
      const auto d = unicode::decode(tok, i);
      if (!unicode::is_word(d.cp) || (d.cp >= '0' && d.cp <= '9') || d.cp == '_') alpha = false;
      ++length;
      i += d.length;
    }
    if (alpha) ++alpha_tokens;
    if (dash == std::string_view::npos) break;
    ++length;  // the hyphen itself
    start = dash + 1;
  }
  return alpha_tokens >= cfg.seo_min_tokens &&
         length >= static_cast<std::size_t>(cfg.seo_min_length);
}

/// Assigns exactly one category; rules are tried in the order of the
/// UrlCategory enumerators and the first match wins.
inline UrlCategory categorize_url(const ParsedUrl& p, const std::set<std::string>& news_hosts,
                                  const std::set<std::string>& keywords,
                                  const UrlCategoryConfig& cfg = {}) {
  for (const auto& [k, v] : p.query) {
    if (cfg.search_keys.contains(detail::ascii_lower(k))) return UrlCategory::web_search;
  }
  if (p.host == "wikipedia.org" || p.host.ends_with(".wikipedia.org")) {
    return UrlCategory::wikipedia;
  }
  if (detail::is_social_host(p.host)) return UrlCategory::social_media;
  const bool seo = is_seo_path(p.path, cfg);
  const std::string bare(detail::strip_www(p.host));
  if (!seo && (news_hosts.contains(p.host) || news_hosts.contains(bare) ||
               news_hosts.contains("www." + bare))) {
    return UrlCategory::news_no_seo;
  }
  if (seo) return UrlCategory::seo_title;
  for (const auto& k : keywords) {
    if (!k.empty() && p.host.find(k) != std::string::npos) return UrlCategory::keyworded_domain;
  }
  return UrlCategory::other;
}

/// Newline-delimited list: trimmed, lowercased, blank lines and '#' comments skipped.
inline std::set<std::string> load_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(unicode::to_lower(std::string_view(line).substr(b, e - b + 1)));
  }
  return out;
}

}  // namespace webtopic
