#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

/// Character n-gram language model per class, combined by linear
/// interpolation of orders 1..order with backoff for unseen contexts.
///
/// Each training string is padded with order-1 begin sentinels and one end
/// sentinel. The order-n estimate of character c after context h is
/// count(h c) / count(h .) when h was seen in the class, otherwise the order
/// n-1 estimate. Order 1 is add-one smoothed over the vocabulary of all
/// characters seen in training (both classes) plus one unknown slot.
class LibModel {
 public:
  static constexpr char32_t kBegin = 0x02;
  static constexpr char32_t kEnd = 0x03;

  struct ClassCounts {
    // context (order-1 chars) -> next char -> count; one table per order
    std::vector<std::map<std::u32string, std::map<char32_t, std::uint64_t>>> grams;
    std::vector<std::map<std::u32string, std::uint64_t>> context_totals;
  };

  explicit LibModel(int order = 4) : order_(order) {
    if (order < 1) throw ConfigError("LIB order must be >= 1");
    weights_.assign(static_cast<std::size_t>(order), 1.0 / order);
    for (auto& c : classes_) {
      c.grams.resize(static_cast<std::size_t>(order));
      c.context_totals.resize(static_cast<std::size_t>(order));
    }
  }

  int order() const { return order_; }
  const std::vector<double>& interpolation_weights() const { return weights_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  void set_interpolation_weights(std::vector<double> w) {
    if (w.size() != static_cast<std::size_t>(order_)) {
      throw ConfigError("LIB needs one interpolation weight per order");
    }
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw ConfigError("LIB interpolation weights must be nonnegative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("LIB interpolation weights must sum to 1");
    weights_ = std::move(w);
  }

  void add(std::string_view text, Label label) {
    auto& cls = classes_[index(label)];
    const auto chars = padded(text, true);
    const std::size_t pad = static_cast<std::size_t>(order_ - 1);
    for (std::size_t pos = pad; pos < chars.size(); ++pos) {
      vocab_.insert(chars[pos]);
      for (int n = 1; n <= order_; ++n) {
        const std::u32string ctx = chars.substr(pos - static_cast<std::size_t>(n - 1),
                                                static_cast<std::size_t>(n - 1));
        ++cls.grams[static_cast<std::size_t>(n - 1)][ctx][chars[pos]];
        ++cls.context_totals[static_cast<std::size_t>(n - 1)][ctx];
      }
    }
    ++documents_[index(label)];
  }

  /// Count of the n-gram `gram` (1 <= length <= order) in the class. Begin and
  /// end sentinels are written as U+0002 and U+0003.
  std::uint64_t count(Label label, std::string_view gram) const {
    const std::u32string g = decode(gram);
    if (g.empty() || g.size() > static_cast<std::size_t>(order_)) return 0;
    const auto& table = classes_[index(label)].grams[g.size() - 1];
    const auto it = table.find(g.substr(0, g.size() - 1));
    if (it == table.end()) return 0;
    const auto jt = it->second.find(g.back());
    return jt == it->second.end() ? 0 : jt->second;
  }

  /// Interpolated probability of each query character; begin sentinels give
  /// the first characters their context, no end sentinel is scored.
  std::vector<double> char_probabilities(std::string_view text, Label label) const {
    const auto& cls = classes_[index(label)];
    const auto chars = padded(text, false);
    const std::size_t pad = static_cast<std::size_t>(order_ - 1);
    std::vector<double> out;
    for (std::size_t pos = pad; pos < chars.size(); ++pos) {
      double p = 0.0;
      double lower = unigram(cls, chars[pos]);
      for (int n = 1; n <= order_; ++n) {
        double pn = lower;
        if (n > 1) {
          const std::u32string ctx = chars.substr(pos - static_cast<std::size_t>(n - 1),
                                                  static_cast<std::size_t>(n - 1));
          const auto& totals = cls.context_totals[static_cast<std::size_t>(n - 1)];
          const auto t = totals.find(ctx);
          if (t != totals.end()) {
            const auto& next = cls.grams[static_cast<std::size_t>(n - 1)].at(ctx);
            const auto c = next.find(chars[pos]);
            pn = c == next.end() ? 0.0 : static_cast<double>(c->second) / static_cast<double>(t->second);
          }
        }
        p += weights_[static_cast<std::size_t>(n - 1)] * pn;
        lower = pn;
      }
      out.push_back(p);
    }
    return out;
  }

  double log_likelihood(std::string_view text, Label label) const {
    double s = 0.0;
    for (double p : char_probabilities(text, label)) s += std::log(p);
    return s;
  }

  /// log P(text | positive) - log P(text | negative).
  double score(std::string_view text) const {
    check_trained();
    return log_likelihood(text, Label::positive) - log_likelihood(text, Label::negative);
  }

  /// Ties go to negative.
  Label predict(std::string_view text) const {
    return score(text) > 0.0 ? Label::positive : Label::negative;
  }

  nlohmann::json to_json() const {
    nlohmann::json classes = nlohmann::json::object();
    for (Label l : {Label::negative, Label::positive}) {
      const auto& cls = classes_[index(l)];
      nlohmann::json grams = nlohmann::json::array();
      for (std::size_t n = 0; n < cls.grams.size(); ++n) {
        for (const auto& [ctx, next] : cls.grams[n]) {
          for (const auto& [c, count] : next) {
            grams.push_back({encode(ctx + c), count});
          }
        }
      }
      classes[std::string(to_string(l))] = {{"documents", documents_[index(l)]}, {"grams", grams}};
    }
    std::string vocab;
    for (char32_t c : vocab_) unicode::append_utf8(vocab, c);
    return {{"format", "webtopic-lib"}, {"version", 1},           {"order", order_},
            {"weights", weights_},      {"vocabulary", vocab},    {"classes", classes}};
  }

  static LibModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "webtopic-lib" || j.value("version", 0) != 1) {
      throw InputError("not a webtopic-lib v1 model");
    }
    LibModel m(j.at("order").get<int>());
    m.set_interpolation_weights(j.at("weights").get<std::vector<double>>());
    for (char32_t c : decode(j.at("vocabulary").get<std::string>())) m.vocab_.insert(c);
    for (Label l : {Label::negative, Label::positive}) {
      const auto& cj = j.at("classes").at(std::string(to_string(l)));
      auto& cls = m.classes_[index(l)];
      m.documents_[index(l)] = cj.at("documents").get<std::uint64_t>();
      for (const auto& g : cj.at("grams")) {
        const std::u32string gram = decode(g.at(0).get<std::string>());
        const auto count = g.at(1).get<std::uint64_t>();
        if (gram.empty() || gram.size() > static_cast<std::size_t>(m.order_)) {
          throw InputError("LIB model: bad n-gram length");
        }
        const std::u32string ctx = gram.substr(0, gram.size() - 1);
        cls.grams[gram.size() - 1][ctx][gram.back()] += count;
        cls.context_totals[gram.size() - 1][ctx] += count;
      }
    }
    return m;
  }

 private:
  static std::size_t index(Label l) { return l == Label::positive ? 1 : 0; }

  static std::u32string decode(std::string_view s) {
    std::u32string out;
    for (std::size_t i = 0; i < s.size();) {
      const auto d = unicode::decode(s, i);
      out.push_back(d.cp);
      i += d.length;
    }
    return out;
  }

  static std::string encode(const std::u32string& s) {
    std::string out;
    for (char32_t c : s) unicode::append_utf8(out, c);
    return out;
  }

  std::u32string padded(std::string_view text, bool with_end) const {
    std::u32string out(static_cast<std::size_t>(order_ - 1), kBegin);
    out += decode(text);
    if (with_end) out.push_back(kEnd);
    return out;
  }

  double unigram(const ClassCounts& cls, char32_t c) const {
    const auto& table = cls.grams[0];
    std::uint64_t count = 0;
    std::uint64_t total = 0;
    if (const auto it = table.find(std::u32string{}); it != table.end()) {
      if (const auto jt = it->second.find(c); jt != it->second.end()) count = jt->second;
      total = cls.context_totals[0].at(std::u32string{});
    }
    return (static_cast<double>(count) + 1.0) /
           (static_cast<double>(total) + static_cast<double>(vocab_.size()) + 1.0);
  }

  void check_trained() const {
    if (documents_[0] == 0 || documents_[1] == 0) {
      throw StateError("LIB model has not seen both classes");
    }
  }

  int order_;
  std::vector<double> weights_;
  ClassCounts classes_[2];
  std::uint64_t documents_[2] = {0, 0};
  std::set<char32_t> vocab_;
};

/// Builds a model from (feature text, label) pairs; both classes required.
inline LibModel lib_train(const std::vector<std::pair<std::string, Label>>& examples, int order = 4) {
  LibModel m(order);
  bool pos = false, neg = false;
  for (const auto& [text, label] : examples) {
    m.add(text, label);
    (label == Label::positive ? pos : neg) = true;
  }
  if (!pos || !neg) throw InputError("LIB training needs examples of both classes");
  return m;
}

}  // namespace webtopic
