#include <gtest/gtest.h>

#include "webtopic/random.hpp"
#include "webtopic/url.hpp"

#include "support/temp_dir.hpp"
#include "webtopic/io.hpp"

using namespace webtopic;

TEST(ParseUrl, PathWithoutQuery) {
  const auto p = parse_url("http://gutefrage.net/frage/chef-zahlt-bar-auf-die-hand-legal");
  EXPECT_EQ(p.scheme, "http");
  EXPECT_EQ(p.host, "gutefrage.net");
  EXPECT_EQ(p.path, "/frage/chef-zahlt-bar-auf-die-hand-legal");
  EXPECT_TRUE(p.query.empty());
}

TEST(ParseUrl, RootPath) {
  const auto p = parse_url("https://example.com/");
  EXPECT_EQ(p.scheme, "https");
  EXPECT_EQ(p.path, "/");
  EXPECT_TRUE(p.query.empty());
}

TEST(ParseUrl, MissingSchemeDefaultsToHttp) {
  const auto p = parse_url("google.com/search?q=value");
  EXPECT_EQ(p.scheme, "http");
  EXPECT_EQ(p.host, "google.com");
  EXPECT_EQ(p.path, "/search");
  ASSERT_EQ(p.query.size(), 1u);
  EXPECT_EQ(p.query[0], (std::pair<std::string, std::string>{"q", "value"}));
}

TEST(ParseUrl, HostLowercasedPercentEncodingKept) {
  const auto p = parse_url("HTTPS://WWW.Example.COM:8080/A%20b?z=1&a=%C3%A4&flag#top");
  EXPECT_EQ(p.scheme, "https");
  EXPECT_EQ(p.host, "www.example.com");
  EXPECT_EQ(p.port, "8080");
  EXPECT_EQ(p.path, "/A%20b");
  ASSERT_EQ(p.query.size(), 3u);
  EXPECT_EQ(p.query[0].first, "z");
  EXPECT_EQ(p.query[1].second, "%C3%A4");
  EXPECT_EQ(p.query[2].first, "flag");
  EXPECT_EQ(p.query[2].second, "");
  EXPECT_EQ(p.fragment, "top");
}

TEST(ParseUrl, ErrorsQuoteOffendingPart) {
  EXPECT_THROW(parse_url(""), InputError);
  EXPECT_THROW(parse_url("   "), InputError);
  try {
    parse_url("http://exa mple.com/x");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("exa mple.com"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_url("http:///path"), InputError);
  EXPECT_THROW(parse_url("http://host:port/"), InputError);
}

TEST(FeatureText, Examples) {
  ParsedUrl p;
  p.host = "example.com";
  p.path = "/germany-legalises-cannabis";
  EXPECT_EQ(url_feature_text(p), "germany legalises cannabis");
  p.path = "/";
  EXPECT_EQ(url_feature_text(p), "");
  p.path = "/search";
  p.query = {{"q", "solar"}};
  EXPECT_EQ(url_feature_text(p), "search q solar");
}

TEST(FeatureText, LowercasesAndDropsHost) {
  EXPECT_EQ(url_feature_text("https://News.Example.de/Politik/Cannabis-Gesetz?Page=2"),
            "politik cannabis gesetz page 2");
}

namespace {

std::string random_token(Rng& rng, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(26)));
  return s;
}

std::string random_url(Rng& rng, std::string& host_token) {
  host_token = "zq" + random_token(rng, 10);
  std::string url = rng.below(2) ? "https://" : "";
  url += host_token + "." + (rng.below(2) ? "de" : "com");
  const auto segs = rng.below(4);
  for (std::uint64_t i = 0; i < segs; ++i) {
    url += "/" + random_token(rng, 1 + rng.below(6));
    if (rng.below(2)) url += "-" + random_token(rng, 1 + rng.below(8));
  }
  if (rng.below(2)) {
    url += "?";
    const auto n = 1 + rng.below(3);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (i) url += "&";
      url += random_token(rng, 1 + rng.below(3)) + "=" + random_token(rng, rng.below(5));
    }
  }
  return url;
}

}  // namespace

TEST(FeatureText, NeverContainsHostProperty) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::string host;
    const auto url = random_url(rng, host);
    EXPECT_EQ(url_feature_text(url).find(host), std::string::npos) << url;
  }
}

TEST(Reassemble, ParseReassembleIdempotent) {
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    std::string host;
    const auto url = random_url(rng, host);
    const auto once = reassemble(parse_url(url));
    EXPECT_EQ(reassemble(parse_url(once)), once) << url;
    EXPECT_EQ(parse_url(once), parse_url(url)) << url;
  }
}

TEST(Categorize, Examples) {
  EXPECT_EQ(categorize_url(parse_url("google.com/search?q=value"), {}, {}), UrlCategory::web_search);
  EXPECT_EQ(categorize_url(parse_url("example.com/germany-legalises-cannabis"), {}, {}),
            UrlCategory::seo_title);
  EXPECT_EQ(categorize_url(parse_url("de.wikipedia.org/wiki/Cannabis"), {}, {}),
            UrlCategory::wikipedia);
}

TEST(Categorize, RemainingRules) {
  const std::set<std::string> news = {"spiegel.de"};
  const std::set<std::string> kw = {"cannabis"};
  EXPECT_EQ(categorize_url(parse_url("https://www.instagram.com/p/abc"), news, kw),
            UrlCategory::social_media);
  EXPECT_EQ(categorize_url(parse_url("https://www.spiegel.de/politik/a-123"), news, kw),
            UrlCategory::news_no_seo);
  EXPECT_EQ(categorize_url(parse_url("https://www.spiegel.de/politik/ampel-einigt-sich-auf-cannabis"),
                           news, kw),
            UrlCategory::seo_title);
  EXPECT_EQ(categorize_url(parse_url("https://cannabis-shop.de/produkte"), news, kw),
            UrlCategory::keyworded_domain);
  EXPECT_EQ(categorize_url(parse_url("https://example.com/about"), news, kw), UrlCategory::other);
  // search parameter wins over every other rule
  EXPECT_EQ(categorize_url(parse_url("https://de.wikipedia.org/w/index.php?search=hanf"), news, kw),
            UrlCategory::web_search);
}

TEST(Categorize, SeoThresholdsConfigurable) {
  UrlCategoryConfig cfg;
  EXPECT_FALSE(is_seo_path("/a-b-c", cfg));                 // too short
  EXPECT_FALSE(is_seo_path("/cannabisgesetzbeschlossen", cfg));  // one token
  EXPECT_TRUE(is_seo_path("/news/cannabis-gesetz-kommt.html", cfg));
  EXPECT_FALSE(is_seo_path("/2023-10-12-42", cfg));        // digits are not alphabetic tokens
  cfg.seo_min_tokens = 2;
  cfg.seo_min_length = 5;
  EXPECT_TRUE(is_seo_path("/ab-cd", cfg));
}

TEST(Categorize, TotalAndDeterministic) {
  Rng rng(8);
  const std::set<std::string> news = {"zqabc.de"};
  const std::set<std::string> kw = {"ab", "cannabis"};
  for (int i = 0; i < 1000; ++i) {
    std::string host;
    const auto p = parse_url(random_url(rng, host));
    const auto a = categorize_url(p, news, kw);
    EXPECT_EQ(a, categorize_url(p, news, kw));
    EXPECT_NE(to_string(a), "");
  }
}

TEST(LoadList, SkipsBlanksAndComments) {
  test::TempDir dir;
  io::atomic_write_string(dir / "news.txt", "spiegel.de\n\n# comment\n  zeit.de  \r\n");
  EXPECT_EQ(load_list(dir / "news.txt"), (std::set<std::string>{"spiegel.de", "zeit.de"}));
  EXPECT_THROW(load_list(dir / "missing.txt"), InputError);
}
