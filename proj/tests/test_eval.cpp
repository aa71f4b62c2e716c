#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "support/temp_dir.hpp"
#include "webtopic/eval.hpp"
#include "webtopic/random.hpp"

using namespace webtopic;

namespace {

constexpr Label P = Label::positive;
constexpr Label N = Label::negative;

// Two-sided exact p by listing all 2^n sign sequences of n discordant pairs.
double enumerated_p(int b, int c) {
  const int n = b + c;
  if (n == 0) return 1.0;
  const int m = std::min(b, c);
  std::uint64_t at_most = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    if (std::popcount(mask) <= m) ++at_most;
  }
  return std::min(1.0, 2.0 * static_cast<double>(at_most) / static_cast<double>(std::uint64_t{1} << n));
}

// Upper tail of chi-square(1): 1 - integral of sqrt(2/pi) exp(-u^2/2) over
// [0, sqrt(x)], by composite Simpson.
double chi2_upper_simpson(double x) {
  const int n = 20000;
  const double hi = std::sqrt(x), h = hi / n;
  auto f = [](double u) { return std::sqrt(2.0 / 3.14159265358979323846) * std::exp(-u * u / 2.0); };
  double s = f(0) + f(hi);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4 : 2);
  return 1.0 - s * h / 3.0;
}

}  // namespace

TEST(Metrics, Examples) {
  auto m = compute_metrics({{P, P}, {P, P}, {N, P}, {P, N}, {N, N}});
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3);
  EXPECT_EQ(m.counts, (ConfusionCounts{2, 1, 1, 1}));
  m = compute_metrics({{P, P}, {N, N}});
  EXPECT_EQ(m.f1, 1.0);
  m = compute_metrics({{P, N}, {N, N}});
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_THROW(compute_metrics({}), InputError);
}

TEST(Metrics, HarmonicMeanBounds) {
  Rng rng(8);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::pair<Label, Label>> p;
    const auto n = 1 + rng.below(40);
    for (std::size_t j = 0; j < n; ++j) p.emplace_back(rng.below(3) ? N : P, rng.below(2) ? N : P);
    const auto m = compute_metrics(p);
    ASSERT_FALSE(std::isnan(m.f1));
    ASSERT_LE(m.f1, std::min(2 * m.precision, 2 * m.recall) + 1e-12);
    ASSERT_LE(m.f1, (m.precision + m.recall) / 2 + 1e-12);
    ASSERT_GE(m.f1, std::min(m.precision, m.recall) - 1e-12);
    if (m.precision + m.recall > 0) {
      ASSERT_NEAR(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-12);
    }
  }
}

TEST(PrCurve, Examples) {
  auto c = pr_curve({{P, 0.9}, {P, 0.8}, {N, 0.3}, {N, 0.1}});
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[1], (PrPoint{1.0, 1.0, 0.8}));
  EXPECT_DOUBLE_EQ(average_precision(c), 1.0);
  c = pr_curve({{P, 0.5}, {N, 0.5}, {N, 0.5}, {N, 0.5}});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (PrPoint{1.0, 0.25, 0.5}));
  EXPECT_THROW(pr_curve({{N, 0.4}}), InputError);
}

TEST(PrCurve, RecallMonotoneAndThresholdsDistinct) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::pair<Label, double>> s;
    const auto n = 1 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i) s.emplace_back(rng.below(4) ? N : P, static_cast<double>(rng.below(10)) / 10);
    s[0].first = P;
    const auto c = pr_curve(s);
    std::set<double> distinct;
    for (const auto& [g, x] : s) distinct.insert(x);
    ASSERT_EQ(c.size(), distinct.size());
    ASSERT_DOUBLE_EQ(c.back().recall, 1.0);
    for (std::size_t i = 1; i < c.size(); ++i) {
      ASSERT_GT(c[i - 1].threshold, c[i].threshold);
      ASSERT_LE(c[i - 1].recall, c[i].recall);
    }
  }
}

TEST(PrCurve, RandomScoresGivePrevalence) {
  Rng rng(77);
  double total = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    std::vector<std::pair<Label, double>> s;
    for (int i = 0; i < 1000; ++i) s.emplace_back(rng.uniform() < 0.2 ? P : N, rng.uniform());
    total += average_precision(pr_curve(s));
  }
  EXPECT_NEAR(total / reps, 0.2, 0.1);
}

TEST(McNemar, Examples) {
  auto r = mcnemar(0, 0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.method, McNemarResult::Method::exact_binomial);
  EXPECT_FALSE(r.statistic);
  r = mcnemar(0, 10);
  EXPECT_NEAR(r.p_value, 0.001953, 1e-6);
  EXPECT_TRUE(r.significant_at_0_05);
  r = mcnemar(40, 60);
  EXPECT_EQ(r.method, McNemarResult::Method::chi2_cc);
  EXPECT_DOUBLE_EQ(*r.statistic, 3.61);
  EXPECT_NEAR(r.p_value, chi2_upper_simpson(3.61), 1e-8);
  EXPECT_NEAR(r.p_value, 0.0575, 1e-3);
}

TEST(McNemar, ExactBranchMatchesEnumeration) {
  for (int b = 0; b <= 12; ++b) {
    for (int c = 0; b + c <= 12; ++c) {
      ASSERT_NEAR(mcnemar(b, c).p_value, enumerated_p(b, c), 1e-12) << b << "," << c;
    }
  }
}

TEST(McNemar, MethodCutoffAndSymmetry) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto b = rng.below(80), c = rng.below(80);
    const auto x = mcnemar(b, c), y = mcnemar(c, b);
    ASSERT_EQ(x.p_value, y.p_value);
    ASSERT_EQ(x.method == McNemarResult::Method::exact_binomial, b + c < 25);
    ASSERT_GE(x.p_value, 0.0);
    ASSERT_LE(x.p_value, 1.0);
    if (x.statistic) ASSERT_NEAR(x.p_value, chi2_upper_simpson(*x.statistic), 1e-7);
  }
}

TEST(McNemar, CountsDiscordantPairs) {
  // A wrong/B right twice, A right/B wrong once, concordant otherwise
  const auto r = mcnemar({{P, N, P}, {N, P, N}, {P, P, N}, {P, P, P}, {N, P, P}});
  EXPECT_EQ(r.b, 2u);
  EXPECT_EQ(r.c, 1u);
  EXPECT_THROW(mcnemar(std::vector<std::tuple<Label, Label, Label>>{}), InputError);
}

TEST(Bench, NoOpAndSingleRun) {
  std::vector<std::string> chunks(1000, "x");
  auto t = bench_throughput([](const auto&) {}, chunks);
  EXPECT_EQ(t.per_run.size(), 5u);
  EXPECT_TRUE(std::isfinite(t.mean));
  EXPECT_GT(t.mean, 0);
  EXPECT_GE(t.stddev, 0);
  t = bench_throughput([](const auto&) {}, chunks, 1);
  EXPECT_EQ(t.stddev, 0.0);
  EXPECT_THROW(bench_throughput([](const auto&) {}, chunks, 0), ConfigError);
}

TEST(Bench, SleepStubNearHundredPerSecond) {
  std::vector<std::string> chunks(10, "x");
  const auto t = bench_throughput(
      [](const auto& c) {
        for (std::size_t i = 0; i < c.size(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
      },
      chunks, 3);
  EXPECT_NEAR(t.mean, 100.0, 20.0);
}

TEST(Report, JsonRoundTripAndFiles) {
  test::TempDir dir;
  EvalReport r;
  r.topic = "cannabis";
  r.model = "svm";
  r.splits.push_back(evaluate_split("bal", {{"a", {}, P, P, 0.9}, {"b", {}, N, N, 0.2}, {"c", {}, P, N, 0.4}}));
  r.splits.back().throughput = Throughput{120.5, 3.25, {118, 123}};
  r.splits.push_back(evaluate_split("unbl", {{"d", {}, N, N, 0.1}}));
  const auto j = to_json(r);
  EXPECT_TRUE(j["splits"][0].contains("precision"));
  EXPECT_TRUE(j["splits"][0].contains("recall"));
  EXPECT_TRUE(j["splits"][0].contains("f1"));
  const auto back = report_from_json(json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.splits[0].metrics, r.splits[0].metrics);
  EXPECT_EQ(back.splits[0].pr, r.splits[0].pr);

  emit_report(r, dir / "out");
  EXPECT_EQ(json::parse(io::read_file(dir / "out" / "report.json")), j);
  const auto csv = io::read_file(dir / "out" / "pr_bal.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "recall,precision,threshold");
  EXPECT_NE(io::read_file(dir / "out" / "report.txt").find("bal"), std::string::npos);
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(emit_report(r, dir / "file" / "sub"), InputError);
}

TEST(Predictions, RoundTripAndPairing) {
  test::TempDir dir;
  const std::vector<Prediction> a = {{"p1", {}, P, P, 0.8}, {"p2", {}, N, P, 0.6}, {"p3", {}, N, N, 0.0}};
  save_predictions(a, dir / "a.jsonl");
  EXPECT_EQ(load_predictions(dir / "a.jsonl"), a);
  std::vector<Prediction> b = {{"p3", {}, N, P, 0.7}, {"p1", {}, P, N, 0.1}, {"p2", {}, N, N, 0.2}};
  const auto paired = pair_predictions(a, b);
  const auto r = mcnemar(paired);
  EXPECT_EQ(r.b, 1u);  // p2
  EXPECT_EQ(r.c, 2u);  // p1, p3
  b[0].gold = P;
  EXPECT_THROW(pair_predictions(a, b), InputError);
  b.pop_back();
  EXPECT_THROW(pair_predictions(a, b), InputError);
}
