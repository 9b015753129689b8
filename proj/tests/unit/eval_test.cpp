#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fmc/eval.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

// Pairwise Mann-Whitney count, ties worth one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y, int cls) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != cls) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] == cls) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

TEST(Confusion, Basics) {
  std::vector<int> y{0, 1, 2, 3, 4};
  const auto cm = confusion(y, y);
  EXPECT_EQ(cm.counts, (ConfusionCounts<>::Identity()));
  const auto wrong = confusion(std::vector<int>{1}, std::vector<int>{0});
  EXPECT_EQ(wrong.counts(0, 1), 1);
  EXPECT_EQ(wrong.total(), 1);
  EXPECT_THROW(confusion(std::vector<int>{1, 2}, std::vector<int>{0}), LengthMismatch);
}

TEST(Confusion, OrderInvariant) {
  std::vector<int> p{0, 1, 1, 3, 4, 2}, t{0, 2, 1, 3, 0, 2};
  const auto a = confusion(p, t);
  std::reverse(p.begin(), p.end());
  std::reverse(t.begin(), t.end());
  EXPECT_EQ(confusion(p, t), a);
}

TEST(Metrics, Diagonal) {
  ConfusionCounts<> c = ConfusionCounts<>::Zero();
  c.diagonal() << 3, 4, 5, 6, 7;
  const auto m = metrics(c);
  for (double v : {m.accuracy, m.balanced_accuracy, m.precision_w, m.recall_w, m.f1_w, m.f1_macro}) {
    EXPECT_DOUBLE_EQ(v, 1.0);
  }
}

TEST(Metrics, TwoClassFixture) {
  ConfusionCounts<> c = ConfusionCounts<>::Zero();
  c(0, 0) = 9;
  c(0, 1) = 1;
  c(1, 0) = 1;
  c(1, 1) = 1;
  const auto m = metrics(c);
  EXPECT_NEAR(m.accuracy, 10.0 / 12.0, 1e-12);
  EXPECT_NEAR(m.balanced_accuracy, 0.7, 1e-12);
  EXPECT_NEAR(m.precision(0), 0.9, 1e-12);
  EXPECT_NEAR(m.precision(1), 0.5, 1e-12);
  EXPECT_NEAR(m.precision_w, (10 * 0.9 + 2 * 0.5) / 12, 1e-12);
  EXPECT_NEAR(m.f1_w, (10 * 0.9 + 2 * 0.5) / 12, 1e-12);
}

TEST(Metrics, EmptyThrows) { EXPECT_THROW(metrics(ConfusionCounts<>::Zero().eval()), EmptyMatrix); }

TEST(Metrics, ZeroPredictedPrecisionIsZero) {
  ConfusionCounts<> c = ConfusionCounts<>::Zero();
  c(0, 0) = 2;
  c(1, 0) = 2;
  const auto m = metrics(c);
  EXPECT_EQ(m.precision(1), 0.0);
  EXPECT_NEAR(m.balanced_accuracy, 0.5, 1e-15);
}

TEST(Metrics, WeightedRecallEqualsAccuracyOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionCounts<> c;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) c(i, j) = rng.uniform() < 0.3 ? 0 : static_cast<std::int64_t>(rng.below(50));
    }
    if (c.sum() == 0) c(0, 0) = 1;
    const auto m = metrics(c);
    EXPECT_NEAR(m.recall_w, m.accuracy, 1e-12);
    EXPECT_LE(m.balanced_accuracy, 1.0);
  }
}

TEST(Metrics, BalancedEqualsAccuracyWithEqualRecalls) {
  ConfusionCounts<> c = ConfusionCounts<>::Constant(1);
  c.diagonal().setConstant(6);
  const auto m = metrics(c);
  EXPECT_NEAR(m.balanced_accuracy, m.accuracy, 1e-15);
}

TEST(Roc, Fixtures) {
  std::vector<int> y{1, 1, 0, 0};
  EXPECT_NEAR(roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y, 1).auc, 1.0, 1e-12);
  EXPECT_NEAR(roc_curve(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y, 1).auc, 0.0, 1e-12);
  EXPECT_NEAR(roc_curve(std::vector<double>{0.9, 0.4, 0.6, 0.1}, y, 1).auc, 0.75, 1e-12);
  EXPECT_THROW(roc_curve(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}, 1), UndefinedAuc);
  EXPECT_THROW(roc_curve(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, 1), UndefinedAuc);
}

TEST(Roc, MatchesPairwiseOracleWithTies) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(60));
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = std::floor(rng.uniform(0, 8)) / 8;  // coarse scores force ties
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(3));
    }
    y[0] = 2;
    y[1] = 0;
    const auto curve = roc_curve(s, y, 2);
    EXPECT_NEAR(curve.auc, pairwise_auc(s, y, 2), 1e-12);
    EXPECT_EQ(curve.points.front().fpr, 0.0);
    EXPECT_EQ(curve.points.front().tpr, 0.0);
    EXPECT_DOUBLE_EQ(curve.points.back().fpr, 1.0);
    EXPECT_DOUBLE_EQ(curve.points.back().tpr, 1.0);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      EXPECT_GE(curve.points[i].fpr, curve.points[i - 1].fpr);
      EXPECT_GE(curve.points[i].tpr, curve.points[i - 1].tpr);
    }
    // strictly monotone transform leaves AUC unchanged
    std::vector<double> t(s);
    for (auto& v : t) v = std::exp(3 * v) - 7;
    EXPECT_NEAR(roc_curve(t, y, 2).auc, curve.auc, 1e-12);
  }
}

TEST(Bootstrap, ZeroWhenPerfectAndDeterministic) {
  std::vector<int> y(100, 2);
  EXPECT_EQ(bootstrap_se_accuracy(y, y, 50, 1), 0.0);
  std::vector<int> p(y);
  for (int i = 0; i < 30; ++i) p[static_cast<std::size_t>(i * 3)] = 0;
  EXPECT_EQ(bootstrap_se_accuracy(p, y, 50, 4), bootstrap_se_accuracy(p, y, 50, 4));
  EXPECT_THROW(bootstrap_se_accuracy(p, y, 1, 4), ConfigError);
}

TEST(Bootstrap, NearBinomialClosedForm) {
  const int n = 10000;
  Rng rng(5);
  std::vector<int> p(n), y(n, 0);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = rng.uniform() < 0.8 ? 0 : 1;
    hits += p[static_cast<std::size_t>(i)] == 0;
  }
  const double acc = static_cast<double>(hits) / n;
  const double closed = std::sqrt(acc * (1 - acc) / n);
  EXPECT_NEAR(bootstrap_se_accuracy(p, y, 1000, 3) / closed, 1.0, 0.2);
}

TEST(Evaluate, ReportAndCsv) {
  ProbMatrix P(4, 5);
  P << 0.9, 0.1, 0, 0, 0, 0.2, 0.8, 0, 0, 0, 0.6, 0.4, 0, 0, 0, 0.1, 0.9, 0, 0, 0;
  std::vector<int> y{0, 0, 1, 1};
  const auto r = evaluate(P, y, {.bootstrap = 10, .roc = true, .seed = 1});
  EXPECT_EQ(r.n, 4u);
  EXPECT_NEAR(r.m.accuracy, 0.5, 1e-15);
  EXPECT_NEAR(r.auc[0], 0.75, 1e-12);
  EXPECT_TRUE(std::isnan(r.auc[2]));
  EXPECT_EQ(r.roc.size(), 2u);
  std::ostringstream out;
  write_roc_csv(out, r.roc[0]);
  EXPECT_EQ(out.str().substr(0, 22), "threshold,fpr,tpr\ninf,");
}

}  // namespace
}  // namespace fmc
