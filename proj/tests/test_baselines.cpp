#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "webtopic/lib_model.hpp"
#include "webtopic/random.hpp"
#include "webtopic/svm.hpp"
#include "webtopic/url.hpp"

using namespace webtopic;
using namespace webtopic::oracle;

namespace {

double accuracy(const SvmModel& m, const std::vector<LabeledVector>& data) {
  int ok = 0;
  for (const auto& ex : data) ok += svm_predict(m, ex.x) == ex.y;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace

TEST(Svm, SeparableDataIsFitExactly) {
  Rng rng(1);
  const auto data = separable(rng, 200);
  const auto m = svm_train(data, {1e-4, 10, 3});
  EXPECT_DOUBLE_EQ(accuracy(m, data), 1.0);
  for (const auto& ex : data) {
    EXPECT_EQ(svm_score(m, ex.x) >= 0.0, ex.y == Label::positive);
  }
}

TEST(Svm, NoSignalPredictsMajority) {
  for (const auto& [n_pos, n_neg] : {std::pair{70, 30}, std::pair{25, 75}}) {
    std::vector<LabeledVector> data;
    for (int i = 0; i < n_pos + n_neg; ++i) {
      data.push_back({dense_to_sparse({0.5, 0.5}), i < n_pos ? Label::positive : Label::negative});
    }
    const auto m = svm_train(data, {1e-4, 10, 7});
    EXPECT_DOUBLE_EQ(accuracy(m, data), static_cast<double>(std::max(n_pos, n_neg)) / (n_pos + n_neg));
  }
}

TEST(Svm, DeterministicPerSeed) {
  Rng rng(2);
  const auto data = separable(rng, 50);
  EXPECT_EQ(svm_train(data, {1e-4, 5, 11}), svm_train(data, {1e-4, 5, 11}));
  EXPECT_NE(svm_train(data, {1e-4, 5, 11}).weights, svm_train(data, {1e-4, 5, 12}).weights);
}

TEST(Svm, ObjectiveDoesNotIncreaseOnRandomData) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabeledVector> data;
    for (int i = 0; i < 60; ++i) {
      std::vector<double> x(8);
      for (auto& c : x) c = rng.normal();
      data.push_back({dense_to_sparse(x), rng.below(2) ? Label::positive : Label::negative});
    }
    data[0].y = Label::positive;
    data[1].y = Label::negative;
    SvmModel zero;
    zero.weights.assign(8, 0.0);
    zero.lambda = 1e-2;
    const auto m = svm_train(data, {1e-2, 10, static_cast<std::uint64_t>(trial)});
    EXPECT_LE(svm_objective(m, data), svm_objective(zero, data));
  }
}

TEST(Svm, ScoringRules) {
  SvmModel m;
  m.weights = {1.0, -2.0};
  m.bias = 0.25;
  EXPECT_DOUBLE_EQ(svm_score(m, dense_to_sparse({0, 0})), 0.25);
  m.bias = 0.0;
  const auto v = dense_to_sparse({0.5, 0.1});
  const double s = svm_score(m, v);
  for (auto& w : m.weights) w = -w;
  EXPECT_DOUBLE_EQ(svm_score(m, v), -s);
  EXPECT_THROW(svm_score(m, dense_to_sparse({1, 2, 3})), InputError);
}

TEST(Svm, PreconditionsAndSerialization) {
  std::vector<LabeledVector> one_class = {{dense_to_sparse({1.0}), Label::positive}};
  EXPECT_THROW(svm_train(one_class), InputError);
  const auto clf = TextSvm::train({"cannabis gesetz legal", "wetter heute sonnig", "cannabis shop",
                                   "fussball bundesliga"},
                                  {Label::positive, Label::negative, Label::positive, Label::negative},
                                  100, {1e-3, 10, 1});
  EXPECT_GT(clf.score("cannabis legal"), 0.0);
  EXPECT_LT(clf.score("bundesliga wetter"), 0.0);
  const auto back = TextSvm::from_json(nlohmann::json::parse(clf.to_json().dump()));
  EXPECT_EQ(back.model, clf.model);
  EXPECT_DOUBLE_EQ(back.score("cannabis"), clf.score("cannabis"));
  EXPECT_THROW(TextSvm::from_json({{"format", "other"}}), InputError);
}

// ---------------------------------------------------------------------------
// LIB

namespace {

LibModel train_ab(const std::vector<std::string>& a, const std::vector<std::string>& b, int order = 4) {
  std::vector<std::pair<std::string, Label>> ex;
  for (const auto& s : a) ex.emplace_back(s, Label::positive);
  for (const auto& s : b) ex.emplace_back(s, Label::negative);
  return lib_train(ex, order);
}

}  // namespace

TEST(Lib, BigramCount) {
  const auto m = train_ab({"cannabis gesetz"}, {"x"}, 2);
  EXPECT_EQ(m.count(Label::positive, "ca"), 1u);
  EXPECT_EQ(m.count(Label::positive, "s"), 2u);
  EXPECT_EQ(m.count(Label::positive, "\x02" "c"), 1u);
  EXPECT_EQ(m.count(Label::positive, "z\x03"), 1u);
  EXPECT_EQ(m.count(Label::negative, "ca"), 0u);
}

TEST(Lib, EmptyAndDuplicatedTrainingStrings) {
  const auto m = train_ab({""}, {"ab"}, 3);
  EXPECT_EQ(m.count(Label::positive, "\x03"), 1u);
  EXPECT_EQ(m.count(Label::positive, "\x02\x03"), 1u);
  EXPECT_EQ(m.count(Label::positive, "\x02\x02\x03"), 1u);
  const auto once = train_ab({"abc"}, {"z"}, 3);
  const auto twice = train_ab({"abc", "abc"}, {"z"}, 3);
  for (const char* g : {"a", "ab", "abc", "\x02\x02" "a", "c\x03"}) {
    EXPECT_EQ(twice.count(Label::positive, g), 2 * once.count(Label::positive, g)) << g;
  }
}

TEST(Lib, MatchesBruteForceOracle) {
  const LibOracle oracle{4, {"cannabis legal"}, {"energie solar"}};
  const auto m = train_ab(oracle.pos, oracle.neg);
  for (const std::string q : {"cannabis gesetz", "energie solar", "solar legal", "qqq", "c"}) {
    EXPECT_NEAR(m.log_likelihood(q, Label::positive), oracle.ll(q, true), 1e-9) << q;
    EXPECT_NEAR(m.log_likelihood(q, Label::negative), oracle.ll(q, false), 1e-9) << q;
  }
  EXPECT_EQ(m.predict("cannabis gesetz"), Label::positive);
  EXPECT_GT(oracle.ll("cannabis gesetz", true), oracle.ll("cannabis gesetz", false));
  EXPECT_EQ(m.predict("energie solar"), Label::negative);
  EXPECT_EQ(m.predict(""), Label::negative);
  EXPECT_EQ(m.score(""), 0.0);
}

TEST(Lib, RandomizedOracleAgreement) {
  Rng rng(5);
  auto word = [&] {
    std::string s;
    for (auto n = 1 + rng.below(8); n > 0; --n) s.push_back(static_cast<char>('a' + rng.below(5)));
    return s;
  };
  for (int trial = 0; trial < 30; ++trial) {
    LibOracle oracle{1 + static_cast<int>(rng.below(4)), {}, {}};
    for (auto n = 1 + rng.below(4); n > 0; --n) oracle.pos.push_back(word() + " " + word());
    for (auto n = 1 + rng.below(4); n > 0; --n) oracle.neg.push_back(word());
    const auto m = train_ab(oracle.pos, oracle.neg, oracle.order);
    const auto q = word();
    EXPECT_NEAR(m.log_likelihood(q, Label::positive), oracle.ll(q, true), 1e-9);
    EXPECT_NEAR(m.log_likelihood(q, Label::negative), oracle.ll(q, false), 1e-9);
  }
}

TEST(Lib, ProbabilitiesBoundedAndFinite) {
  Rng rng(6);
  const auto m = train_ab({"germany legalises cannabis", "cannabis gesetz"}, {"wetter heute", "bundesliga tabelle"});
  for (int i = 0; i < 200; ++i) {
    std::string q;
    for (auto n = rng.below(30); n > 0; --n) q.push_back(static_cast<char>(32 + rng.below(95)));
    if (rng.below(4) == 0) q += "äöü€";
    for (Label l : {Label::positive, Label::negative}) {
      for (double p : m.char_probabilities(q, l)) {
        EXPECT_GT(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
      EXPECT_TRUE(std::isfinite(m.log_likelihood(q, l)));
    }
  }
}

TEST(Lib, DuplicationKeepsPredictions) {
  Rng rng(7);
  const std::vector<std::string> pos_words = {"cannabis", "hanf", "legal", "gesetz", "kiffen"};
  const std::vector<std::string> neg_words = {"wetter", "sport", "auto", "rezept", "urlaub"};
  std::vector<std::string> pos, neg;
  for (int i = 0; i < 20; ++i) {
    pos.push_back(pos_words[rng.below(5)] + " " + pos_words[rng.below(5)]);
    neg.push_back(neg_words[rng.below(5)] + " " + neg_words[rng.below(5)]);
  }
  const auto m1 = train_ab(pos, neg);
  auto pos2 = pos, neg2 = neg;
  pos2.insert(pos2.end(), pos.begin(), pos.end());
  neg2.insert(neg2.end(), neg.begin(), neg.end());
  const auto m2 = train_ab(pos2, neg2);
  for (const auto& w : pos_words) EXPECT_EQ(m1.predict(w), m2.predict(w)) << w;
  for (const auto& w : neg_words) EXPECT_EQ(m1.predict(w), m2.predict(w)) << w;
  for (int i = 0; i < 200; ++i) {
    const std::string q = (rng.below(2) ? pos_words : neg_words)[rng.below(5)] + " " + neg_words[rng.below(5)];
    EXPECT_EQ(m1.predict(q), m2.predict(q)) << q;
  }
}

TEST(Lib, OneClassIsErrorAndJsonRoundTrip) {
  EXPECT_THROW(lib_train({{"a", Label::positive}}), InputError);
  EXPECT_THROW(LibModel(0), ConfigError);
  LibModel empty;
  EXPECT_THROW(empty.score("x"), StateError);
  auto m = train_ab({"germany legalises cannabis", "ärzte über hanf"}, {"wetter heute"});
  EXPECT_THROW(m.set_interpolation_weights({0.5, 0.5}), ConfigError);
  m.set_interpolation_weights({0.1, 0.2, 0.3, 0.4});
  const auto back = LibModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  for (const std::string q : {"cannabis", "hanf ärzte", "", "wetter"}) {
    EXPECT_DOUBLE_EQ(back.score(q), m.score(q));
  }
}
