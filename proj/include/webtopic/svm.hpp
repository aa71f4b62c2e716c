#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/random.hpp"
#include "webtopic/tfidf.hpp"

namespace webtopic {

struct SvmOptions {
  double lambda = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 0;
};

/// Linear classifier w.v + b.
struct SvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  double lambda = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

struct LabeledVector {
  SparseVector x;
  Label y = Label::negative;
};

inline double svm_score(const SvmModel& m, const SparseVector& v) {
  if (v.dim != m.weights.size()) {
    throw InputError("svm: vector dimension " + std::to_string(v.dim) + " does not match model " +
                     std::to_string(m.weights.size()));
  }
  double s = m.bias;
  for (std::size_t i = 0; i < v.nnz(); ++i) s += m.weights[v.indices[i]] * v.values[i];
  return s;
}

inline Label svm_predict(const SvmModel& m, const SparseVector& v) {
  return svm_score(m, v) >= 0.0 ? Label::positive : Label::negative;
}

/// Regularized hinge objective lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b))),
/// with the bias treated as a weight on a constant feature.
inline double svm_objective(const SvmModel& m, const std::vector<LabeledVector>& data) {
  double reg = m.bias * m.bias;
  for (double w : m.weights) reg += w * w;
  double loss = 0.0;
  for (const auto& ex : data) {
    const double y = ex.y == Label::positive ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * svm_score(m, ex.x));
  }
  return 0.5 * m.lambda * reg + (data.empty() ? 0.0 : loss / static_cast<double>(data.size()));
}

/// Pegasos: stochastic subgradient descent on the primal with step
/// 1/(lambda t), followed by projection onto the ball of radius 1/sqrt(lambda).
/// Each epoch visits the examples in a fresh seeded order; the returned
/// weights are the average of the iterates over the last epoch.
inline SvmModel svm_train(const std::vector<LabeledVector>& data, const SvmOptions& opt = {}) {
  if (!(opt.lambda > 0.0)) throw ConfigError("svm lambda must be > 0");
  if (opt.epochs < 1) throw ConfigError("svm epochs must be >= 1");
  bool has_pos = false, has_neg = false;
  for (const auto& ex : data) (ex.y == Label::positive ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw InputError("svm training needs examples of both classes");
  const std::size_t dim = data.front().x.dim;
  for (const auto& ex : data) {
    if (ex.x.dim != dim) throw InputError("svm training vectors differ in dimension");
  }

  // w = scale * v, with the bias as coordinate `dim`
  std::vector<double> v(dim + 1, 0.0);
  double scale = 1.0;
  double v_sq = 0.0;  // |v|^2
  const double radius_sq = 1.0 / opt.lambda;
  std::vector<double> avg(dim + 1, 0.0);
  std::size_t avg_count = 0;

  Rng rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order);
    const bool last = epoch + 1 == opt.epochs;
    for (std::size_t idx : order) {
      ++t;
      const auto& ex = data[idx];
      const double y = ex.y == Label::positive ? 1.0 : -1.0;
      double dot = v[dim];
      for (std::size_t i = 0; i < ex.x.nnz(); ++i) dot += v[ex.x.indices[i]] * ex.x.values[i];
      const double margin = y * scale * dot;
      const double eta = 1.0 / (opt.lambda * static_cast<double>(t));

      scale *= 1.0 - 1.0 / static_cast<double>(t);
      if (scale == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
        v_sq = 0.0;
        dot = 0.0;
      }
      if (margin < 1.0) {
        const double a = eta * y / scale;
        double x_sq = 1.0;
        for (std::size_t i = 0; i < ex.x.nnz(); ++i) {
          v[ex.x.indices[i]] += a * ex.x.values[i];
          x_sq += ex.x.values[i] * ex.x.values[i];
        }
        v[dim] += a;
        v_sq += 2.0 * a * dot + a * a * x_sq;
      }
      const double norm_sq = scale * scale * v_sq;
      if (norm_sq > radius_sq) scale *= std::sqrt(radius_sq / norm_sq);
      if (scale < 1e-9) {  // fold the scale back in before v blows up
        for (double& x : v) x *= scale;
        v_sq *= scale * scale;
        scale = 1.0;
      }

      if (last) {
        for (std::size_t i = 0; i <= dim; ++i) avg[i] += scale * v[i];
        ++avg_count;
      }
    }
  }

  SvmModel m;
  m.lambda = opt.lambda;
  m.epochs = opt.epochs;
  m.seed = opt.seed;
  m.weights.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) m.weights[i] = avg[i] / static_cast<double>(avg_count);
  m.bias = avg[dim] / static_cast<double>(avg_count);
  return m;
}

inline nlohmann::json to_json(const SvmModel& m) {
  return {{"weights", m.weights}, {"bias", m.bias}, {"lambda", m.lambda},
          {"epochs", m.epochs},   {"seed", m.seed}};
}

inline SvmModel svm_from_json(const nlohmann::json& j) {
  SvmModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.lambda = j.at("lambda").get<double>();
  m.epochs = j.at("epochs").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

/// TF-IDF vectorizer and SVM trained together on raw texts.
struct TextSvm {
  TfidfVectorizer vectorizer;
  SvmModel model;

  static TextSvm train(const std::vector<std::string>& texts, const std::vector<Label>& labels,
                       std::size_t max_features, const SvmOptions& opt = {}) {
    if (texts.size() != labels.size()) throw InputError("svm: texts and labels differ in length");
    TextSvm out;
    out.vectorizer = TfidfVectorizer(max_features);
    out.vectorizer.fit(texts);
    std::vector<LabeledVector> data;
    data.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      data.push_back({out.vectorizer.transform(texts[i]), labels[i]});
    }
    out.model = svm_train(data, opt);
    return out;
  }

  double score(std::string_view text) const { return svm_score(model, vectorizer.transform(text)); }

  nlohmann::json to_json() const {
    return {{"format", "webtopic-svm"}, {"version", 1},
            {"tfidf", vectorizer.to_json()}, {"svm", webtopic::to_json(model)}};
  }

  static TextSvm from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "webtopic-svm" || j.value("version", 0) != 1) {
      throw InputError("not a webtopic-svm v1 model");
    }
    TextSvm out;
    out.vectorizer = TfidfVectorizer::from_json(j.at("tfidf"));
    out.model = svm_from_json(j.at("svm"));
    if (out.model.weights.size() != out.vectorizer.dim()) {
      throw InputError("svm model: weight count does not match vocabulary");
    }
    return out;
  }
};

}  // namespace webtopic
