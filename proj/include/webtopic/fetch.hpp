#pragma once

#include <chrono>
#include <cstddef>
#include <string>

#include "webtopic/corpus.hpp"
#include "webtopic/detail/http.hpp"
#include "webtopic/error.hpp"
#include "webtopic/url.hpp"

namespace webtopic {

struct FetchConfig {
  std::chrono::milliseconds timeout{15000};
  std::size_t max_body = 5u << 20;
  std::string user_agent = "webtopic/1.0";
  int max_redirects = 5;
};

inline void validate(const FetchConfig& cfg) {
  if (cfg.timeout.count() <= 0) throw ConfigError("fetch timeout must be positive");
  if (cfg.max_body == 0) throw ConfigError("fetch max_body must be positive");
  if (cfg.max_redirects < 0) throw ConfigError("fetch max_redirects must be non-negative");
}

namespace detail {

/// Resolves a Location header against the URL it came from.
inline std::string resolve_location(const ParsedUrl& base, const std::string& location) {
  if (location.find("://") != std::string::npos) return location;
  std::string origin = base.scheme + "://" + base.host;
  if (!base.port.empty()) origin += ":" + base.port;
  if (location.starts_with("//")) return base.scheme + ":" + location;
  if (location.starts_with('/')) return origin + location;
  const auto slash = base.path.rfind('/');
  return origin + base.path.substr(0, slash + 1) + location;
}

inline std::string path_and_query(const ParsedUrl& p) {
  std::string out = p.path;
  for (std::size_t i = 0; i < p.query.size(); ++i) {
    out += i == 0 ? '?' : '&';
    out += p.query[i].first;
    if (!p.query[i].second.empty()) out += "=" + p.query[i].second;
  }
  return out;
}

}  // namespace detail

/// Plain HTTP GET without script execution.
///
/// Transport failures never throw: they are recorded in fetch_status (read or
/// connect timeouts as `timeout`, anything else without a response as
/// `http_error:0`). Bodies longer than max_body are cut at max_body bytes and
/// flagged `too_large`. Only a malformed or non-HTTP URL raises InputError.
inline WebPage fetch_page(const std::string& url, const FetchConfig& cfg) {
  validate(cfg);
  ParsedUrl current = parse_url(url);
  if (url.find("://") == std::string::npos) {
    throw InputError("URL must carry an http or https scheme: '" + url + "'");
  }
  if (current.scheme != "http" && current.scheme != "https") {
    throw InputError("unsupported URL scheme '" + current.scheme + "'");
  }

  WebPage page;
  page.id = url;
  page.url = url;
  page.source = Source::panel;

  const auto secs = cfg.timeout.count() / 1000;
  const auto usecs = (cfg.timeout.count() % 1000) * 1000;

  for (int hop = 0;; ++hop) {
    std::string origin = current.scheme + "://" + current.host;
    if (!current.port.empty()) origin += ":" + current.port;
    httplib::Client client(origin);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    client.set_follow_location(false);
    client.enable_server_certificate_verification(true);

    std::string body;
    bool truncated = false;
    int status = 0;
    httplib::Headers headers = {{"User-Agent", cfg.user_agent}};

    auto result = client.Get(
        detail::path_and_query(current), headers,
        [&](const httplib::Response& res) {
          status = res.status;
          return true;
        },
        [&](const char* data, std::size_t len) {
          const std::size_t room = cfg.max_body - body.size();
          if (len > room) {
            body.append(data, room);
            truncated = true;
            return false;
          }
          body.append(data, len);
          return true;
        });

    if (truncated) {
      if (status < 200 || status >= 300) {
        page.fetch_status = FetchStatus::http_error(status);
        return page;
      }
      page.html = std::move(body);
      page.fetch_status = FetchStatus::too_large();
      return page;
    }
    if (!result) {
      const auto err = result.error();
      page.fetch_status = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
                              ? FetchStatus::timeout()
                              : FetchStatus::http_error(status);
      return page;
    }
    status = result->status;
    if (status >= 300 && status < 400 && result->has_header("Location")) {
      if (hop >= cfg.max_redirects) {
        page.fetch_status = FetchStatus::http_error(status);
        return page;
      }
      try {
        current = parse_url(detail::resolve_location(current, result->get_header_value("Location")));
      } catch (const InputError&) {
        page.fetch_status = FetchStatus::http_error(status);
        return page;
      }
      if (current.scheme != "http" && current.scheme != "https") {
        page.fetch_status = FetchStatus::http_error(status);
        return page;
      }
      continue;
    }
    if (status < 200 || status >= 300) {
      page.fetch_status = FetchStatus::http_error(status);
      return page;
    }
    page.html = std::move(body);
    page.fetch_status = FetchStatus::ok();
    return page;
  }
}

}  // namespace webtopic
