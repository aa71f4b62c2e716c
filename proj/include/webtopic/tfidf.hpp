#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "webtopic/chunker.hpp"
#include "webtopic/error.hpp"
#include "webtopic/unicode.hpp"

namespace webtopic {

/// Sorted (index, value) pairs over a fixed dimension.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
  std::size_t nnz() const { return indices.size(); }
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// Lowercased word tokens; punctuation tokens are dropped.
inline std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> out;
  const std::string lower = unicode::to_lower(text);
  for (const auto& span : DefaultTokenizer{}(lower)) {
    const auto d = unicode::decode(lower, span.begin);
    if (unicode::is_word(d.cp)) out.push_back(lower.substr(span.begin, span.end - span.begin));
  }
  return out;
}

/// Term-frequency / inverse-document-frequency vectorizer.
///
/// The vocabulary keeps the `max_features` terms with the highest total count
/// (ties broken alphabetically), indexed in alphabetical order. Weights are
/// raw count times idf = ln((1 + N) / (1 + df)) + 1, and every vector is
/// L2-normalized; vectors with no in-vocabulary terms stay zero.
class TfidfVectorizer {
 public:
  TfidfVectorizer() = default;
  explicit TfidfVectorizer(std::size_t max_features) : max_features_(max_features) {}

  template <class Range>
  TfidfVectorizer& fit(const Range& texts) {
    std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> stats;  // count, df
    std::size_t n_docs = 0;
    for (const auto& text : texts) {
      ++n_docs;
      std::unordered_map<std::string, std::uint64_t> local;
      for (auto& tok : analyze(text)) ++local[std::move(tok)];
      for (auto& [term, c] : local) {
        auto& s = stats[term];
        s.first += c;
        s.second += 1;
      }
    }
    if (n_docs == 0 || stats.empty()) throw InputError("tfidf fit needs at least one non-empty text");

    std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> ranked(
        stats.begin(), stats.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.first < b.first;
    });
    if (ranked.size() > max_features_) ranked.resize(max_features_);
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    terms_.clear();
    idf_.clear();
    index_.clear();
    for (const auto& [term, s] : ranked) {
      index_.emplace(term, static_cast<std::uint32_t>(terms_.size()));
      terms_.push_back(term);
      idf_.push_back(std::log((1.0 + static_cast<double>(n_docs)) /
                              (1.0 + static_cast<double>(s.second))) +
                     1.0);
    }
    n_docs_ = n_docs;
    return *this;
  }

  bool fitted() const { return !terms_.empty(); }
  std::size_t dim() const { return terms_.size(); }
  std::size_t max_features() const { return max_features_; }
  std::size_t n_docs() const { return n_docs_; }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<double>& idf() const { return idf_; }

  double idf(std::string_view term) const {
    const auto it = index_.find(std::string(term));
    if (it == index_.end()) throw InputError("term not in vocabulary: " + std::string(term));
    return idf_[it->second];
  }

  SparseVector transform(std::string_view text) const {
    if (!fitted()) throw StateError("tfidf transform called before fit");
    std::map<std::uint32_t, double> counts;
    for (const auto& tok : analyze(text)) {
      const auto it = index_.find(tok);
      if (it != index_.end()) counts[it->second] += 1.0;
    }
    SparseVector v;
    v.dim = dim();
    double sq = 0.0;
    for (const auto& [i, c] : counts) {
      const double w = c * idf_[i];
      v.indices.push_back(i);
      v.values.push_back(w);
      sq += w * w;
    }
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& w : v.values) w *= inv;
    }
    return v;
  }

  /// Rows are documents.
  template <class Range>
  Eigen::SparseMatrix<double, Eigen::RowMajor> transform_matrix(const Range& texts) const {
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::Index row = 0;
    for (const auto& text : texts) {
      const auto v = transform(text);
      for (std::size_t i = 0; i < v.nnz(); ++i) {
        triplets.emplace_back(row, static_cast<Eigen::Index>(v.indices[i]), v.values[i]);
      }
      ++row;
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(row, static_cast<Eigen::Index>(dim()));
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
  }

  nlohmann::json to_json() const {
    return {{"max_features", max_features_}, {"n_docs", n_docs_}, {"terms", terms_}, {"idf", idf_}};
  }

  static TfidfVectorizer from_json(const nlohmann::json& j) {
    TfidfVectorizer v(j.at("max_features").get<std::size_t>());
    v.n_docs_ = j.at("n_docs").get<std::size_t>();
    v.terms_ = j.at("terms").get<std::vector<std::string>>();
    v.idf_ = j.at("idf").get<std::vector<double>>();
    if (v.terms_.size() != v.idf_.size()) throw InputError("tfidf model: terms/idf size mismatch");
    for (std::size_t i = 0; i < v.terms_.size(); ++i) {
      v.index_.emplace(v.terms_[i], static_cast<std::uint32_t>(i));
    }
    return v;
  }

 private:
  std::size_t max_features_ = 10000;
  std::size_t n_docs_ = 0;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

inline TfidfVectorizer tfidf_fit(const std::vector<std::string>& texts, std::size_t max_features) {
  TfidfVectorizer v(max_features);
  v.fit(texts);
  return v;
}

inline SparseVector tfidf_transform(std::string_view text, const TfidfVectorizer& model) {
  return model.transform(text);
}

}  // namespace webtopic
