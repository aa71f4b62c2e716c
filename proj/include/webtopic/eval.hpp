#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/corpus.hpp"
#include "webtopic/error.hpp"
#include "webtopic/io.hpp"

namespace webtopic {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.counts = c;
  m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// pairs are (gold, predicted)
inline Metrics compute_metrics(const std::vector<std::pair<Label, Label>>& preds) {
  if (preds.empty()) throw InputError("no predictions to evaluate");
  ConfusionCounts c;
  for (const auto& [gold, pred] : preds) {
    const bool g = gold == Label::positive, p = pred == Label::positive;
    if (g && p) ++c.tp;
    else if (!g && p) ++c.fp;
    else if (!g) ++c.tn;
    else ++c.fn;
  }
  return metrics_from_counts(c);
}

// ---------------------------------------------------------------------------
// Precision-recall

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// pairs are (gold, score). One point per distinct score, thresholds
/// descending; a point counts scores >= threshold as positive.
inline std::vector<PrPoint> pr_curve(std::vector<std::pair<Label, double>> scored) {
  std::uint64_t positives = 0;
  for (const auto& [g, s] : scored) {
    if (std::isnan(s)) throw InputError("NaN score");
    positives += g == Label::positive;
  }
  if (positives == 0) throw InputError("PR curve needs at least one positive example");
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<PrPoint> out;
  std::uint64_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    tp += scored[i].first == Label::positive;
    ++seen;
    if (i + 1 < scored.size() && scored[i + 1].second == scored[i].second) continue;
    out.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                   static_cast<double>(tp) / static_cast<double>(seen), scored[i].second});
  }
  return out;
}

/// Step-wise area: sum of precision times recall increment.
inline double average_precision(const std::vector<PrPoint>& curve) {
  double ap = 0.0, prev = 0.0;
  for (const auto& p : curve) {
    ap += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// McNemar

struct McNemarResult {
  enum class Method { exact_binomial, chi2_cc };
  std::uint64_t b = 0;  // A wrong, B right
  std::uint64_t c = 0;  // A right, B wrong
  std::optional<double> statistic;
  double p_value = 1.0;
  Method method = Method::exact_binomial;
  bool significant_at_0_05 = false;
};

inline std::string_view to_string(McNemarResult::Method m) {
  return m == McNemarResult::Method::exact_binomial ? "exact_binomial" : "chi2_cc";
}

inline McNemarResult mcnemar(std::uint64_t b, std::uint64_t c) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const std::uint64_t n = b + c;
  if (n < 25) {
    r.method = McNemarResult::Method::exact_binomial;
    // P(X <= min(b, c)) for X ~ Binomial(n, 1/2)
    const std::uint64_t m = std::min(b, c);
    double coef = 1.0, tail = 0.0;
    for (std::uint64_t i = 0; i <= m; ++i) {
      tail += coef;
      coef = coef * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    r.p_value = std::min(1.0, 2.0 * tail * std::ldexp(1.0, -static_cast<int>(n)));
  } else {
    r.method = McNemarResult::Method::chi2_cc;
    const double d = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    r.statistic = d * d / static_cast<double>(n);
    r.p_value = std::erfc(std::sqrt(*r.statistic / 2.0));
  }
  r.significant_at_0_05 = r.p_value < 0.05;
  return r;
}

/// Triples are (gold, prediction of A, prediction of B).
inline McNemarResult mcnemar(const std::vector<std::tuple<Label, Label, Label>>& paired) {
  if (paired.empty()) throw InputError("McNemar needs paired predictions");
  std::uint64_t b = 0, c = 0;
  for (const auto& [g, a, bb] : paired) {
    const bool a_ok = a == g, b_ok = bb == g;
    if (!a_ok && b_ok) ++b;
    if (a_ok && !b_ok) ++c;
  }
  return mcnemar(b, c);
}

inline json to_json(const McNemarResult& r) {
  return {{"b", r.b},
          {"c", r.c},
          {"statistic", r.statistic ? json(*r.statistic) : json()},
          {"p_value", r.p_value},
          {"method", to_string(r.method)},
          {"significant_at_0_05", r.significant_at_0_05}};
}

// ---------------------------------------------------------------------------
// Throughput

struct Throughput {
  double mean = 0.0;    // chunks per second
  double stddev = 0.0;  // sample standard deviation over runs
  std::vector<double> per_run;
};

/// Times `score_fn` over all chunks `runs` times. Setup such as model loading
/// belongs outside score_fn.
inline Throughput bench_throughput(const std::function<void(const std::vector<std::string>&)>& score_fn,
                                   const std::vector<std::string>& chunks, int runs = 5) {
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (chunks.empty()) throw InputError("no chunks to benchmark");
  Throughput t;
  for (int r = 0; r < runs; ++r) {
    const auto start = std::chrono::steady_clock::now();
    score_fn(chunks);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    const double secs = std::max(took.count(), 1e-9);
    t.per_run.push_back(static_cast<double>(chunks.size()) / secs);
  }
  for (double x : t.per_run) t.mean += x;
  t.mean /= static_cast<double>(runs);
  if (runs > 1) {
    double ss = 0.0;
    for (double x : t.per_run) ss += (x - t.mean) * (x - t.mean);
    t.stddev = std::sqrt(ss / static_cast<double>(runs - 1));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Predictions and reports

/// One document-level (or, with `index`, chunk-level) prediction.
struct Prediction {
  std::string page_id;
  std::optional<int> index;
  Label gold = Label::negative;
  Label predicted = Label::negative;
  double score = 0.0;
  std::uint64_t unparseable = 0;  // generated answers that could not be parsed
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

inline json to_json(const Prediction& p) {
  json j = {{"page_id", p.page_id}};
  if (p.index) j["index"] = *p.index;
  j["gold"] = to_string(p.gold);
  j["predicted"] = to_string(p.predicted);
  j["score"] = p.score;
  if (p.unparseable) j["unparseable"] = p.unparseable;
  return j;
}

inline Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.page_id = j.at("page_id").get<std::string>();
  if (j.contains("index")) p.index = j["index"].get<int>();
  p.gold = parse_label(j.at("gold").get<std::string>());
  p.predicted = parse_label(j.at("predicted").get<std::string>());
  p.score = j.at("score").get<double>();
  p.unparseable = j.value("unparseable", std::uint64_t{0});
  if (std::isnan(p.score)) throw InputError("prediction " + p.page_id + " has NaN score");
  return p;
}

inline void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  io::atomic_write(path, [&](std::ostream& out) {
    for (const auto& p : preds) out << to_json(p).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  });
}

inline std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  io::for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(prediction_from_json(j)); });
  return out;
}

inline std::string prediction_key(const Prediction& p) {
  return p.index ? p.page_id + "#" + std::to_string(*p.index) : p.page_id;
}

/// Pairs two prediction sets on page id (plus chunk index when present).
/// Both sets must cover the same items with the same gold labels.
inline std::vector<std::tuple<Label, Label, Label>> pair_predictions(const std::vector<Prediction>& a,
                                                                     const std::vector<Prediction>& b) {
  std::map<std::string, const Prediction*> by_key;
  for (const auto& p : b) {
    if (!by_key.emplace(prediction_key(p), &p).second) throw InputError("duplicate prediction " + prediction_key(p));
  }
  if (a.size() != b.size()) throw InputError("prediction files cover different items");
  std::vector<std::tuple<Label, Label, Label>> out;
  for (const auto& p : a) {
    const auto it = by_key.find(prediction_key(p));
    if (it == by_key.end()) throw InputError("item " + prediction_key(p) + " missing from second file");
    if (it->second->gold != p.gold) throw InputError("gold labels disagree for " + prediction_key(p));
    out.emplace_back(p.gold, p.predicted, it->second->predicted);
  }
  return out;
}

struct SplitReport {
  std::string split;
  Metrics metrics;
  std::vector<PrPoint> pr;
  double average_precision = 0.0;
  std::uint64_t unparseable = 0;
  std::optional<Throughput> throughput;
};

struct EvalReport {
  std::string topic;
  std::string model;
  std::vector<SplitReport> splits;
};

inline SplitReport evaluate_split(const std::string& split, const std::vector<Prediction>& preds) {
  SplitReport r;
  r.split = split;
  std::vector<std::pair<Label, Label>> gp;
  std::vector<std::pair<Label, double>> gs;
  for (const auto& p : preds) {
    gp.emplace_back(p.gold, p.predicted);
    gs.emplace_back(p.gold, p.score);
    r.unparseable += p.unparseable;
  }
  r.metrics = compute_metrics(gp);
  if (r.metrics.counts.tp + r.metrics.counts.fn > 0) {
    r.pr = pr_curve(gs);
    r.average_precision = average_precision(r.pr);
  }
  return r;
}

inline json to_json(const SplitReport& s) {
  json pr = json::array();
  for (const auto& p : s.pr) pr.push_back({p.recall, p.precision, p.threshold});
  json j = {{"split", s.split},
            {"precision", s.metrics.precision},
            {"recall", s.metrics.recall},
            {"f1", s.metrics.f1},
            {"tp", s.metrics.counts.tp},
            {"fp", s.metrics.counts.fp},
            {"tn", s.metrics.counts.tn},
            {"fn", s.metrics.counts.fn},
            {"average_precision", s.average_precision},
            {"unparseable_count", s.unparseable},
            {"pr_curve", pr}};
  if (s.throughput) {
    j["throughput"] = {{"chunks_per_sec_mean", s.throughput->mean},
                       {"chunks_per_sec_stddev", s.throughput->stddev},
                       {"runs", s.throughput->per_run.size()},
                       {"per_run", s.throughput->per_run}};
  }
  return j;
}

inline json to_json(const EvalReport& r) {
  json splits = json::array();
  for (const auto& s : r.splits) splits.push_back(to_json(s));
  return {{"topic", r.topic}, {"model", r.model}, {"splits", splits}};
}

inline EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.topic = j.at("topic").get<std::string>();
  r.model = j.at("model").get<std::string>();
  for (const auto& s : j.at("splits")) {
    SplitReport sr;
    sr.split = s.at("split").get<std::string>();
    sr.metrics.counts = {s.at("tp").get<std::uint64_t>(), s.at("fp").get<std::uint64_t>(),
                         s.at("tn").get<std::uint64_t>(), s.at("fn").get<std::uint64_t>()};
    sr.metrics.precision = s.at("precision").get<double>();
    sr.metrics.recall = s.at("recall").get<double>();
    sr.metrics.f1 = s.at("f1").get<double>();
    sr.average_precision = s.at("average_precision").get<double>();
    sr.unparseable = s.at("unparseable_count").get<std::uint64_t>();
    for (const auto& p : s.at("pr_curve")) sr.pr.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    if (s.contains("throughput")) {
      const auto& t = s["throughput"];
      sr.throughput = Throughput{t.at("chunks_per_sec_mean").get<double>(), t.at("chunks_per_sec_stddev").get<double>(),
                                 t.at("per_run").get<std::vector<double>>()};
    }
    r.splits.push_back(std::move(sr));
  }
  return r;
}

/// Plain-text table: one row per split with precision, recall and F1.
inline std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << "topic: " << r.topic << "  model: " << r.model << "\n";
  out << std::left << std::setw(8) << "split" << std::right << std::setw(8) << "Prec" << std::setw(8) << "Rec"
      << std::setw(8) << "F1" << std::setw(8) << "AP" << std::setw(8) << "docs" << std::setw(8) << "unpars"
      << "\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& s : r.splits) {
    const auto& c = s.metrics.counts;
    out << std::left << std::setw(8) << s.split << std::right << std::setw(8) << s.metrics.precision << std::setw(8)
        << s.metrics.recall << std::setw(8) << s.metrics.f1 << std::setw(8) << s.average_precision << std::setw(8)
        << (c.tp + c.fp + c.tn + c.fn) << std::setw(8) << s.unparseable << "\n";
    if (s.throughput) {
      out << "  throughput " << std::setprecision(1) << s.throughput->mean << " +/- " << s.throughput->stddev
          << " chunks/sec over " << s.throughput->per_run.size() << " runs\n"
          << std::setprecision(3);
    }
  }
  return out.str();
}

inline std::string pr_csv(const std::vector<PrPoint>& pr) {
  std::ostringstream out;
  out << "recall,precision,threshold\n" << std::setprecision(17);
  for (const auto& p : pr) out << p.recall << ',' << p.precision << ',' << p.threshold << '\n';
  return out.str();
}

/// Writes report.json, report.txt and pr_<split>.csv into `dir`.
inline void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw InputError("cannot create report directory " + dir.string());
  io::atomic_write_string(dir / "report.json", to_json(r).dump(2) + "\n");
  io::atomic_write_string(dir / "report.txt", format_report(r));
  for (const auto& s : r.splits) io::atomic_write_string(dir / ("pr_" + s.split + ".csv"), pr_csv(s.pr));
}

}  // namespace webtopic
