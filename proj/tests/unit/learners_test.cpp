#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "fmc/learners.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

struct Toy {
  Eigen::MatrixXd X;
  std::vector<int> y;
};

// Labels depend on x0 + x1 thresholds, with extra noise columns.
Toy make_toy(int n, std::uint64_t seed, bool separable = true) {
  Rng rng(seed);
  Toy t{Eigen::MatrixXd(n, 4), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) t.X(i, j) = rng.uniform(-1, 1);
    const double s = t.X(i, 0) + 0.5 * t.X(i, 1) + (separable ? 0.0 : 0.3 * rng.normal());
    t.y[static_cast<std::size_t>(i)] = s < -0.5 ? 0 : s < 0 ? 1 : s < 0.5 ? 2 : 3;
  }
  return t;
}

double accuracy(const Classifier& m, const Toy& t) {
  const auto labels = hard_labels(m.predict(t.X));
  int ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += labels[i] == t.y[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

TEST(Forest, SingleTreeEqualsFitTree) {
  const auto t = make_toy(300, 1, false);
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = 0;
  p.feature_subsample = 4;
  p.min_leaf = 5;
  const auto forest = fit_forest(t.X, t.y, p);
  TreeParams tp;
  tp.min_leaf = 5;
  const auto tree = fit_tree(t.X, t.y, tp);
  EXPECT_EQ(forest->trees()[0], tree);
  EXPECT_EQ(forest->predict(t.X), DecisionTreeModel(tree, 4).predict(t.X));
}

TEST(Forest, DeterministicAndSeedSensitive) {
  const auto t = make_toy(200, 2, false);
  ForestParams p;
  p.n_trees = 5;
  p.seed = 9;
  EXPECT_EQ(fit_forest(t.X, t.y, p)->trees(), fit_forest(t.X, t.y, p)->trees());
  EXPECT_EQ(fit_forest(t.X, t.y, p, 1)->trees(), fit_forest(t.X, t.y, p, 3)->trees());
  auto q = p;
  q.seed = 10;
  EXPECT_NE(fit_forest(t.X, t.y, p)->trees(), fit_forest(t.X, t.y, q)->trees());
}

TEST(Forest, SeparableTrainingAccuracy) {
  // Two classes split by x0 with a margin of 0.4 around the boundary.
  Rng rng(3);
  Toy t{Eigen::MatrixXd(400, 3), std::vector<int>(400)};
  for (int i = 0; i < 400; ++i) {
    const int label = i % 2;
    t.X(i, 0) = (label ? 1 : -1) * rng.uniform(0.2, 1.0);
    t.X(i, 1) = rng.uniform(-1, 1);
    t.X(i, 2) = rng.uniform(-1, 1);
    t.y[static_cast<std::size_t>(i)] = label;
  }
  for (auto v : {ForestVariant::RF, ForestVariant::BAG, ForestVariant::Extra}) {
    ForestParams p;
    p.n_trees = 25;
    p.variant = v;
    EXPECT_EQ(accuracy(*fit_forest(t.X, t.y, p), t), 1.0) << variant_name(v);
  }
}

TEST(Forest, PredictionIsMeanOfTrees) {
  ClassTree a, b;
  a.nodes = {TreeNode{}};
  b.nodes = {TreeNode{}};
  a.values = ClassTree::ValueMatrix(1, 5);
  b.values = ClassTree::ValueMatrix(1, 5);
  a.values << 1, 0, 0, 0, 0;
  b.values << 0, 1, 0, 0, 0;
  ForestModel f({a, b}, {}, 2);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 2);
  const auto p = predict_proba(f, Eigen::RowVectorXd(X.row(0)));
  EXPECT_EQ(p, ProbVector(0.5, 0.5, 0, 0, 0));
  EXPECT_EQ(hard_labels(f.predict(X))[0], 0);
  EXPECT_THROW(f.predict(Eigen::MatrixXd::Zero(1, 3)), SchemaMismatch);
}

TEST(Forest, CandidateCounts) {
  ForestParams p;
  EXPECT_EQ(p.candidates(64), 8);
  EXPECT_EQ(p.candidates(10), 3);
  p.variant = ForestVariant::BAG;
  EXPECT_EQ(p.candidates(10), 10);
  p.feature_subsample = 4;
  EXPECT_EQ(p.candidates(10), 4);
}

TEST(Boosted, ZeroLearningRateGivesPriors) {
  const auto t = make_toy(100, 4, false);
  BoostParams p;
  p.n_rounds = 3;
  p.learning_rate = 0;
  const auto m = fit_boosted(t.X, t.y, p);
  ProbVector prior = ProbVector::Zero();
  for (int l : t.y) prior(l) += 1.0 / 100;
  const auto P = m->predict(t.X);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (int c = 0; c < 5; ++c) EXPECT_NEAR(P(i, c), prior(c), 1e-12);
  }
}

TEST(Boosted, SeparableAndMonotoneLoss) {
  const auto t = make_toy(300, 5);
  for (double lr : {0.05, 0.1, 0.3}) {
    BoostParams p;
    p.n_rounds = 50;
    p.learning_rate = lr;
    p.max_depth = 4;
    std::vector<double> trace;
    const auto m = fit_boosted(t.X, t.y, p, &trace);
    ASSERT_EQ(trace.size(), 50u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12) << lr << " round " << i;
    if (lr >= 0.1) EXPECT_EQ(accuracy(*m, t), 1.0);
  }
}

TEST(Boosted, MarginsAreBasePlusScaledTrees) {
  const auto t = make_toy(120, 6, false);
  BoostParams p;
  p.n_rounds = 4;
  p.max_depth = 2;
  const auto m = fit_boosted(t.X, t.y, p);
  const auto F = m->margins(t.X);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (int c = 0; c < 5; ++c) {
      double f = m->base_scores()(c);
      for (const auto& r : m->rounds()) f += p.learning_rate * r[static_cast<std::size_t>(c)].predict(t.X.row(i))(0);
      EXPECT_NEAR(F(i, c), f, 1e-12);
    }
  }
}

TEST(Baselines, NaiveBayesSingleClass) {
  auto t = make_toy(50, 7);
  std::fill(t.y.begin(), t.y.end(), 3);
  const auto m = fit_baseline(BaselineKind::NaiveBayes, t.X, t.y);
  const auto P = m->predict(make_toy(20, 8).X);
  for (Eigen::Index i = 0; i < P.rows(); ++i) EXPECT_GE(P(i, 3), 1 - 1e-12);
}

TEST(Baselines, NaiveBayesMixedColumns) {
  Rng rng(12);
  Eigen::MatrixXd X(400, 2);
  std::vector<int> y(400);
  for (int i = 0; i < 400; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2;
    X(i, 0) = (i % 2 ? 2.0 : -2.0) + rng.normal();
    X(i, 1) = rng.uniform() < (i % 2 ? 0.9 : 0.1) ? 1.0 : 0.0;
  }
  const auto m = fit_baseline(BaselineKind::NaiveBayes, X, y);
  Eigen::MatrixXd q(2, 2);
  q << 2, 1, -2, 0;
  const auto P = m->predict(q);
  EXPECT_GT(P(0, 1), 0.99);
  EXPECT_GT(P(1, 0), 0.99);
  EXPECT_NEAR(P.row(0).sum(), 1, 1e-12);
}

TEST(Baselines, KnnSelfLabelAndInvalidK) {
  const auto t = make_toy(60, 9, false);
  BaselineParams p;
  p.knn.k = 1;
  const auto m = fit_baseline(BaselineKind::KNN, t.X, t.y, p);
  EXPECT_EQ(accuracy(*m, t), 1.0);
  p.knn.k = 61;
  EXPECT_THROW(fit_baseline(BaselineKind::KNN, t.X, t.y, p), InvalidK);
}

TEST(Baselines, KnnMatchesBruteForce) {
  const auto t = make_toy(300, 10, false);
  const auto q = make_toy(40, 11, false);
  BaselineParams p;
  p.knn.k = 7;
  const auto P = fit_baseline(BaselineKind::KNN, t.X, t.y, p)->predict(q.X);
  const auto s = Standardizer::fit(t.X);
  const Eigen::MatrixXd R = s.apply(t.X), Q = s.apply(q.X);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    std::vector<std::pair<double, int>> d;
    for (Eigen::Index r = 0; r < R.rows(); ++r) d.push_back({(R.row(r) - Q.row(i)).squaredNorm(), t.y[r]});
    std::sort(d.begin(), d.end());
    ProbVector oracle = ProbVector::Zero();
    for (int k = 0; k < 7; ++k) oracle(d[static_cast<std::size_t>(k)].second) += 1.0 / 7;
    EXPECT_LT((P.row(i) - oracle).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Baselines, LogisticMonotoneInFeature) {
  Eigen::MatrixXd X(40, 1);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = i;
    y[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
  }
  const auto m = fit_baseline(BaselineKind::MultinomialLogistic, X, y);
  const auto P = m->predict(X);
  for (Eigen::Index i = 1; i < 40; ++i) EXPECT_GT(P(i, 1), P(i - 1, 1));
  EXPECT_LT(P(0, 1), 0.5);
  EXPECT_GT(P(39, 1), 0.5);
}

TEST(Learners, Names) {
  EXPECT_EQ(parse_learner_kind("rf"), LearnerKind::RF);
  EXPECT_EQ(parse_learner_kind("Extra"), LearnerKind::Extra);
  for (const char* bad : {"SVM", "MLP", "ADA", "foo"}) EXPECT_THROW(parse_learner_kind(bad), UnsupportedLearner);
}

TEST(Learners, SpecJsonRoundTrip) {
  auto s = LearnerSpec::defaults(LearnerKind::GB);
  s.boost.n_rounds = 17;
  const auto back = LearnerSpec::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back.boost.n_rounds, 17);
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(LearnerSpec::defaults(LearnerKind::Extra).forest.variant, ForestVariant::Extra);
  EXPECT_EQ(LearnerSpec::defaults(LearnerKind::RF).forest.n_trees, 200);
  EXPECT_EQ(LearnerSpec::defaults(LearnerKind::RF).forest.min_leaf, 5);
}

TEST(Persistence, RoundTripIsPredictionExact) {
  const auto t = make_toy(200, 13, false);
  std::vector<LearnerSpec> specs;
  for (auto k : {LearnerKind::DT, LearnerKind::RF, LearnerKind::BAG, LearnerKind::Extra, LearnerKind::GB,
                 LearnerKind::LR, LearnerKind::NB, LearnerKind::KNN}) {
    auto s = LearnerSpec::defaults(k);
    s.forest.n_trees = 5;
    s.boost.n_rounds = 5;
    specs.push_back(s);
  }
  for (const auto& s : specs) {
    const auto m = fit_learner(s, t.X, t.y, 21);
    const auto text = model_to_json(*m).dump();
    const auto back = model_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back->predict(t.X), m->predict(t.X)) << learner_name(s.kind);
    EXPECT_EQ(model_to_json(*back).dump(), text) << learner_name(s.kind);
  }
}

TEST(Persistence, VersionAndTruncation) {
  const auto t = make_toy(50, 14, false);
  auto j = model_to_json(*fit_learner(LearnerSpec::defaults(LearnerKind::DT), t.X, t.y, 1));
  j["version"] = kModelFormatVersion + 1;
  EXPECT_THROW(model_from_json(j), UnsupportedVersion);
  j["version"] = kModelFormatVersion;
  j["model"].erase("tree");
  EXPECT_THROW(model_from_json(j), ParseError);

  const auto path = std::filesystem::temp_directory_path() / "fmc_truncated_model.json";
  save_model(path, *fit_learner(LearnerSpec::defaults(LearnerKind::DT), t.X, t.y, 1));
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(load_model(path), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace fmc
