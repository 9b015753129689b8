#include "fmc/learners.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fmc/parallel.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

using json = nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw ParseError("matrix: row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = data[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ParseError("matrix: column count mismatch");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

json row_to_json(const Eigen::RowVectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::RowVectorXd row_from_json(const json& a) {
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

ProbVector prob_from_json(const json& a) {
  if (a.size() != kNumModes) throw ParseError("expected 5 class values");
  ProbVector v;
  for (int i = 0; i < kNumModes; ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
  return v;
}

void check_labels(const Eigen::MatrixXd& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw LengthMismatch("X rows and labels disagree");
  if (y.empty()) throw EmptyDataset("no training rows");
  for (int label : y) {
    if (label < 0 || label >= kNumModes) throw Error("label out of range");
  }
}

ForestVariant variant_from_name(const std::string& s) {
  if (s == "RF") return ForestVariant::RF;
  if (s == "BAG") return ForestVariant::BAG;
  if (s == "Extra") return ForestVariant::Extra;
  throw ParseError("unknown forest variant '" + s + "'");
}

}  // namespace

void Classifier::check_width(Eigen::Index cols) const {
  if (cols != n_features()) {
    throw SchemaMismatch(std::string(kind()) + ": expected " + std::to_string(n_features()) + " features, got " +
                         std::to_string(cols));
  }
}

ProbMatrix predict_proba(const Classifier& model, const Eigen::MatrixXd& X) { return model.predict(X); }

ProbVector predict_proba(const Classifier& model, const Eigen::RowVectorXd& x) {
  Eigen::MatrixXd X = x;
  return model.predict(X).row(0);
}

std::vector<int> hard_labels(const ProbMatrix& P) {
  std::vector<int> out(static_cast<std::size_t>(P.rows()));
  for (Eigen::Index i = 0; i < P.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(P.row(i));
  return out;
}

// ---------------------------------------------------------------------------

ProbMatrix DecisionTreeModel::predict(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  ProbMatrix P = ProbMatrix::Zero(X.rows(), kNumModes);
  tree_.accumulate(X, P);
  return P;
}

json DecisionTreeModel::to_json() const { return {{"n_features", n_features_}, {"tree", tree_.to_json()}}; }

std::shared_ptr<DecisionTreeModel> DecisionTreeModel::from_json(const json& j) {
  return std::make_shared<DecisionTreeModel>(ClassTree::from_json(j.at("tree")), j.at("n_features").get<Eigen::Index>());
}

std::string_view variant_name(ForestVariant v) {
  switch (v) {
    case ForestVariant::RF: return "RF";
    case ForestVariant::BAG: return "BAG";
    case ForestVariant::Extra: return "Extra";
  }
  return "?";
}

int ForestParams::candidates(Eigen::Index n_features) const {
  const int p = static_cast<int>(n_features);
  if (feature_subsample > 0) return std::min(feature_subsample, p);
  if (variant == ForestVariant::BAG) return p;
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
}

ProbMatrix ForestModel::predict(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  ProbMatrix P = ProbMatrix::Zero(X.rows(), kNumModes);
  for (const auto& t : trees_) t.accumulate(X, P);
  P /= static_cast<double>(trees_.size());
  return P;
}

json ForestModel::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"n_features", n_features_},
          {"variant", variant_name(params_.variant)},
          {"n_trees", params_.n_trees},
          {"max_depth", params_.max_depth},
          {"min_leaf", params_.min_leaf},
          {"feature_subsample", params_.feature_subsample},
          {"bootstrap", params_.bootstrap},
          {"max_bins", params_.max_bins},
          {"seed", params_.seed},
          {"trees", std::move(trees)}};
}

std::shared_ptr<ForestModel> ForestModel::from_json(const json& j) {
  ForestParams p;
  p.variant = variant_from_name(j.at("variant").get<std::string>());
  p.n_trees = j.at("n_trees").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.min_leaf = j.at("min_leaf").get<double>();
  p.feature_subsample = j.at("feature_subsample").get<int>();
  p.bootstrap = j.at("bootstrap").get<int>();
  p.max_bins = j.at("max_bins").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  std::vector<ClassTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(ClassTree::from_json(t));
  if (trees.empty()) throw ParseError("forest without trees");
  return std::make_shared<ForestModel>(std::move(trees), p, j.at("n_features").get<Eigen::Index>());
}

std::shared_ptr<ForestModel> fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, const ForestParams& params,
                                        int threads) {
  check_labels(X, y);
  if (params.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  const bool extra = params.variant == ForestVariant::Extra;
  BinnedMatrix binned;
  if (!extra) binned = BinnedMatrix::build(X, params.max_bins);
  const auto n = static_cast<std::size_t>(X.rows());

  std::vector<ClassTree> trees(static_cast<std::size_t>(params.n_trees));
  parallel_for(trees.size(), threads, [&](std::size_t t) {
    const auto tree_seed = derive_seed(params.seed, "forest/tree", t);
    std::vector<double> weights(n, params.uses_bootstrap() ? 0.0 : 1.0);
    if (params.uses_bootstrap()) {
      Rng rng(derive_seed(tree_seed, "bootstrap"));
      for (std::size_t i = 0; i < n; ++i) weights[static_cast<std::size_t>(rng.below(n))] += 1.0;
    }
    TreeParams tp;
    tp.max_depth = params.max_depth;
    tp.min_leaf = params.min_leaf;
    tp.feature_subsample = params.candidates(X.cols());
    tp.random_thresholds = extra;
    tp.max_bins = params.max_bins;
    tp.seed = derive_seed(tree_seed, "splits");
    trees[t] = fit_tree_weighted(X, extra ? nullptr : &binned, y, weights, tp);
  });
  return std::make_shared<ForestModel>(std::move(trees), params, X.cols());
}

// ---------------------------------------------------------------------------

ProbMatrix softmax_rows(const ProbMatrix& margins) {
  ProbMatrix P(margins.rows(), kNumModes);
  for (Eigen::Index i = 0; i < margins.rows(); ++i) {
    const double m = margins.row(i).maxCoeff();
    const ProbVector e = (margins.row(i).array() - m).exp().matrix();
    P.row(i) = e / e.sum();
  }
  return P;
}

ProbMatrix BoostedModel::margins(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  ProbMatrix F = base_scores_.replicate(X.rows(), 1);
  for (const auto& round : rounds_) {
    for (int c = 0; c < kNumModes; ++c) {
      const auto& tree = round[static_cast<std::size_t>(c)];
      for (Eigen::Index i = 0; i < X.rows(); ++i) F(i, c) += learning_rate_ * tree.values(tree.leaf_of(X.row(i)), 0);
    }
  }
  return F;
}

ProbMatrix BoostedModel::predict(const Eigen::MatrixXd& X) const { return softmax_rows(margins(X)); }

json BoostedModel::to_json() const {
  json rounds = json::array();
  for (const auto& round : rounds_) {
    json r = json::array();
    for (const auto& t : round) r.push_back(t.to_json());
    rounds.push_back(std::move(r));
  }
  json base = json::array();
  for (int c = 0; c < kNumModes; ++c) base.push_back(base_scores_(c));
  return {{"n_features", n_features_},
          {"learning_rate", learning_rate_},
          {"base_scores", std::move(base)},
          {"rounds", std::move(rounds)}};
}

std::shared_ptr<BoostedModel> BoostedModel::from_json(const json& j) {
  std::vector<Round> rounds;
  for (const auto& r : j.at("rounds")) {
    if (r.size() != kNumModes) throw ParseError("boosted round must hold 5 trees");
    Round round;
    for (int c = 0; c < kNumModes; ++c) round[static_cast<std::size_t>(c)] = RegressionTree::from_json(r[static_cast<std::size_t>(c)]);
    rounds.push_back(std::move(round));
  }
  return std::make_shared<BoostedModel>(prob_from_json(j.at("base_scores")), j.at("learning_rate").get<double>(),
                                        std::move(rounds), j.at("n_features").get<Eigen::Index>());
}

std::shared_ptr<BoostedModel> fit_boosted(const Eigen::MatrixXd& X, std::span<const int> y, const BoostParams& params,
                                          std::vector<double>* loss_trace) {
  check_labels(X, y);
  if (params.n_rounds < 1) throw ConfigError("n_rounds must be >= 1");
  if (params.learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  const auto n = static_cast<std::size_t>(X.rows());

  ProbVector counts = ProbVector::Zero();
  for (int label : y) counts(label) += 1.0;
  ProbVector base;
  for (int c = 0; c < kNumModes; ++c) base(c) = std::log(std::max(counts(c) / static_cast<double>(n), 1e-15));

  const auto binned = BinnedMatrix::build(X, params.max_bins);
  NewtonTreeParams tp;
  tp.max_depth = params.max_depth;
  tp.lambda = params.lambda;
  tp.min_child_weight = params.min_child_weight;

  ProbMatrix F = base.replicate(X.rows(), 1);
  std::vector<double> g(n), h(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<BoostedModel::Round> rounds;
  rounds.reserve(static_cast<std::size_t>(params.n_rounds));

  for (int t = 0; t < params.n_rounds; ++t) {
    const ProbMatrix P = softmax_rows(F);
    std::vector<std::size_t> rows = all;
    if (params.subsample < 1.0) {
      Rng rng(derive_seed(params.seed, "boost/subsample", static_cast<std::uint64_t>(t)));
      rows.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < params.subsample) rows.push_back(i);
      }
      if (rows.empty()) rows = all;
    }
    BoostedModel::Round round;
    for (int c = 0; c < kNumModes; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = P(static_cast<Eigen::Index>(i), c);
        g[i] = p - (y[i] == c ? 1.0 : 0.0);
        h[i] = std::max(p * (1.0 - p), 1e-16);
      }
      round[static_cast<std::size_t>(c)] = fit_newton_tree(binned, g, h, rows, tp);
    }
    for (int c = 0; c < kNumModes; ++c) {
      const auto& tree = round[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        F(r, c) += params.learning_rate * tree.values(tree.leaf_of(X.row(r)), 0);
      }
    }
    rounds.push_back(std::move(round));
    if (loss_trace) {
      const ProbMatrix Q = softmax_rows(F);
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) loss -= std::log(std::max(Q(static_cast<Eigen::Index>(i), y[i]), 1e-300));
      loss_trace->push_back(loss / static_cast<double>(n));
    }
  }
  return std::make_shared<BoostedModel>(base, params.learning_rate, std::move(rounds), X.cols());
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  Standardizer s;
  s.mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - s.mean;
  s.scale = (centered.array().square().colwise().sum() / static_cast<double>(std::max<Eigen::Index>(1, X.rows())))
                .sqrt()
                .matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean).array().rowwise() / scale.array();
}

ProbMatrix LogisticModel::predict(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  ProbMatrix F = std_.apply(X) * weights_;
  F.rowwise() += bias_;
  return softmax_rows(F);
}

json LogisticModel::to_json() const {
  return {{"mean", row_to_json(std_.mean)},
          {"scale", row_to_json(std_.scale)},
          {"weights", matrix_to_json(weights_)},
          {"bias", row_to_json(bias_)}};
}

std::shared_ptr<LogisticModel> LogisticModel::from_json(const json& j) {
  Standardizer s{row_from_json(j.at("mean")), row_from_json(j.at("scale"))};
  return std::make_shared<LogisticModel>(std::move(s), matrix_from_json(j.at("weights")), prob_from_json(j.at("bias")));
}

std::shared_ptr<LogisticModel> fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y,
                                            const LogisticParams& params) {
  check_labels(X, y);
  auto std = Standardizer::fit(X);
  const Eigen::MatrixXd Z = std.apply(X);
  const auto n = static_cast<double>(X.rows());
  ProbMatrix Y = ProbMatrix::Zero(X.rows(), kNumModes);
  for (std::size_t i = 0; i < y.size(); ++i) Y(static_cast<Eigen::Index>(i), y[i]) = 1.0;

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(X.cols(), kNumModes);
  ProbVector b = ProbVector::Zero();
  for (int it = 0; it < params.max_iter; ++it) {
    ProbMatrix F = Z * W;
    F.rowwise() += b;
    const ProbMatrix R = softmax_rows(F) - Y;
    const Eigen::MatrixXd gW = Z.transpose() * R / n + params.l2 * W;
    const ProbVector gb = R.colwise().sum() / n;
    W -= params.learning_rate * gW;
    b -= params.learning_rate * gb;
    if (std::max(gW.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < params.tolerance) break;
  }
  return std::make_shared<LogisticModel>(std::move(std), std::move(W), b);
}

ProbMatrix NaiveBayesModel::predict(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  constexpr double kLog2Pi = 1.8378770664093453;
  ProbMatrix L(X.rows(), kNumModes);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int c = 0; c < kNumModes; ++c) {
      double lp = s_.log_prior(c);
      if (!std::isfinite(lp)) {
        L(i, c) = -std::numeric_limits<double>::infinity();
        continue;
      }
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double x = X(i, j);
        if (s_.binary[static_cast<std::size_t>(j)]) {
          const double p = s_.mean(c, j);
          lp += x * std::log(p) + (1.0 - x) * std::log1p(-p);
        } else {
          const double d = x - s_.mean(c, j);
          lp -= 0.5 * (kLog2Pi + std::log(s_.var(c, j)) + d * d / s_.var(c, j));
        }
      }
      L(i, c) = lp;
    }
  }
  return softmax_rows(L);
}

json NaiveBayesModel::to_json() const {
  json prior = json::array();
  for (int c = 0; c < kNumModes; ++c) prior.push_back(std::exp(s_.log_prior(c)));
  json binary = json::array();
  for (bool b : s_.binary) binary.push_back(b);
  return {{"prior", std::move(prior)}, {"binary", std::move(binary)}, {"mean", matrix_to_json(s_.mean)},
          {"var", matrix_to_json(s_.var)}};
}

std::shared_ptr<NaiveBayesModel> NaiveBayesModel::from_json(const json& j) {
  State s;
  const auto prior = prob_from_json(j.at("prior"));
  for (int c = 0; c < kNumModes; ++c) s.log_prior(c) = std::log(prior(c));
  for (const auto& b : j.at("binary")) s.binary.push_back(b.get<bool>());
  s.mean = matrix_from_json(j.at("mean"));
  s.var = matrix_from_json(j.at("var"));
  return std::make_shared<NaiveBayesModel>(std::move(s));
}

std::shared_ptr<NaiveBayesModel> fit_naive_bayes(const Eigen::MatrixXd& X, std::span<const int> y,
                                                 const NaiveBayesParams& params) {
  check_labels(X, y);
  const auto p = X.cols();
  NaiveBayesModel::State s;
  s.binary.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    s.binary[static_cast<std::size_t>(j)] = ((X.col(j).array() == 0.0) || (X.col(j).array() == 1.0)).all();
  }
  ProbVector counts = ProbVector::Zero();
  for (int label : y) counts(label) += 1.0;
  s.mean = Eigen::MatrixXd::Zero(kNumModes, p);
  s.var = Eigen::MatrixXd::Ones(kNumModes, p);
  for (std::size_t i = 0; i < y.size(); ++i) s.mean.row(y[i]) += X.row(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(kNumModes, p);
  for (int c = 0; c < kNumModes; ++c) {
    if (counts(c) > 0) s.mean.row(c) /= counts(c);
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    sq.row(y[i]) += (X.row(static_cast<Eigen::Index>(i)) - s.mean.row(y[i])).array().square().matrix();
  }
  const Eigen::RowVectorXd overall_mean = X.colwise().mean();
  const double max_var = ((X.rowwise() - overall_mean).array().square().colwise().mean()).maxCoeff();
  const double eps = params.var_smoothing * std::max(max_var, 1e-300);
  const double n = static_cast<double>(y.size());
  for (int c = 0; c < kNumModes; ++c) {
    s.log_prior(c) = counts(c) > 0 ? std::log(counts(c) / n) : -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (s.binary[static_cast<std::size_t>(j)]) {
        const double ones = s.mean(c, j) * counts(c);
        s.mean(c, j) = (ones + params.alpha) / (counts(c) + 2.0 * params.alpha);
      } else {
        s.var(c, j) = (counts(c) > 0 ? sq(c, j) / counts(c) : 0.0) + eps;
        if (!(s.var(c, j) > 0.0)) s.var(c, j) = 1e-300;
      }
    }
  }
  return std::make_shared<NaiveBayesModel>(std::move(s));
}

ProbMatrix KnnModel::predict(const Eigen::MatrixXd& X) const {
  check_width(X.cols());
  const Eigen::MatrixXd Q = std_.apply(X);
  const Eigen::VectorXd ref_norm = ref_.rowwise().squaredNorm();
  ProbMatrix P = ProbMatrix::Zero(X.rows(), kNumModes);
  constexpr Eigen::Index kBlock = 256;
  std::vector<std::pair<double, Eigen::Index>> cand(static_cast<std::size_t>(ref_.rows()));
  for (Eigen::Index start = 0; start < Q.rows(); start += kBlock) {
    const auto len = std::min(kBlock, Q.rows() - start);
    const Eigen::MatrixXd cross = Q.middleRows(start, len) * ref_.transpose();
    for (Eigen::Index i = 0; i < len; ++i) {
      const double qn = Q.row(start + i).squaredNorm();
      for (Eigen::Index r = 0; r < ref_.rows(); ++r) {
        cand[static_cast<std::size_t>(r)] = {std::max(0.0, qn + ref_norm(r) - 2.0 * cross(i, r)), r};
      }
      std::nth_element(cand.begin(), cand.begin() + (k_ - 1), cand.end());
      for (int k = 0; k < k_; ++k) P(start + i, labels_[static_cast<std::size_t>(cand[static_cast<std::size_t>(k)].second)]) += 1.0;
    }
  }
  P /= static_cast<double>(k_);
  return P;
}

json KnnModel::to_json() const {
  return {{"k", k_}, {"mean", row_to_json(std_.mean)}, {"scale", row_to_json(std_.scale)},
          {"reference", matrix_to_json(ref_)}, {"labels", labels_}};
}

std::shared_ptr<KnnModel> KnnModel::from_json(const json& j) {
  Standardizer s{row_from_json(j.at("mean")), row_from_json(j.at("scale"))};
  return std::make_shared<KnnModel>(std::move(s), matrix_from_json(j.at("reference")),
                                    j.at("labels").get<std::vector<int>>(), j.at("k").get<int>());
}

std::shared_ptr<KnnModel> fit_knn(const Eigen::MatrixXd& X, std::span<const int> y, const KnnParams& params) {
  check_labels(X, y);
  if (params.k < 1 || static_cast<std::size_t>(params.k) > y.size()) {
    throw InvalidK("k=" + std::to_string(params.k) + " with " + std::to_string(y.size()) + " training rows");
  }
  auto std = Standardizer::fit(X);
  Eigen::MatrixXd ref = std.apply(X);
  return std::make_shared<KnnModel>(std::move(std), std::move(ref), std::vector<int>(y.begin(), y.end()), params.k);
}

ClassifierPtr fit_baseline(BaselineKind kind, const Eigen::MatrixXd& X, std::span<const int> y,
                           const BaselineParams& params) {
  switch (kind) {
    case BaselineKind::MultinomialLogistic: return fit_logistic(X, y, params.logistic);
    case BaselineKind::NaiveBayes: return fit_naive_bayes(X, y, params.naive_bayes);
    case BaselineKind::KNN: return fit_knn(X, y, params.knn);
  }
  throw UnsupportedLearner("unknown baseline kind");
}

// ---------------------------------------------------------------------------

std::string_view learner_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::DT: return "DT";
    case LearnerKind::RF: return "RF";
    case LearnerKind::BAG: return "BAG";
    case LearnerKind::Extra: return "Extra";
    case LearnerKind::GB: return "GB";
    case LearnerKind::LR: return "LR";
    case LearnerKind::NB: return "NB";
    case LearnerKind::KNN: return "KNN";
  }
  return "?";
}

LearnerKind parse_learner_kind(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "DT") return LearnerKind::DT;
  if (upper == "RF") return LearnerKind::RF;
  if (upper == "BAG") return LearnerKind::BAG;
  if (upper == "EXTRA") return LearnerKind::Extra;
  if (upper == "GB" || upper == "XGBOOST") return LearnerKind::GB;
  if (upper == "LR" || upper == "MNL") return LearnerKind::LR;
  if (upper == "NB") return LearnerKind::NB;
  if (upper == "KNN") return LearnerKind::KNN;
  throw UnsupportedLearner("unsupported learner '" + std::string(name) + "'");
}

bool is_tree_family(LearnerKind k) {
  return k == LearnerKind::DT || k == LearnerKind::RF || k == LearnerKind::BAG || k == LearnerKind::Extra ||
         k == LearnerKind::GB;
}

LearnerSpec LearnerSpec::defaults(LearnerKind kind) {
  LearnerSpec s;
  s.kind = kind;
  s.forest.variant = kind == LearnerKind::BAG     ? ForestVariant::BAG
                     : kind == LearnerKind::Extra ? ForestVariant::Extra
                                                  : ForestVariant::RF;
  return s;
}

json LearnerSpec::to_json() const {
  json j = {{"kind", learner_name(kind)}};
  switch (kind) {
    case LearnerKind::DT:
      j.update({{"max_depth", tree.max_depth}, {"min_leaf", tree.min_leaf}, {"min_gain", tree.min_gain},
                {"max_bins", tree.max_bins}});
      break;
    case LearnerKind::RF:
    case LearnerKind::BAG:
    case LearnerKind::Extra:
      j.update({{"n_trees", forest.n_trees}, {"max_depth", forest.max_depth}, {"min_leaf", forest.min_leaf},
                {"feature_subsample", forest.feature_subsample}, {"max_bins", forest.max_bins}});
      break;
    case LearnerKind::GB:
      j.update({{"n_rounds", boost.n_rounds}, {"learning_rate", boost.learning_rate}, {"max_depth", boost.max_depth},
                {"lambda", boost.lambda}, {"min_child_weight", boost.min_child_weight},
                {"subsample", boost.subsample}, {"max_bins", boost.max_bins}});
      break;
    case LearnerKind::LR:
      j.update({{"l2", baseline.logistic.l2}, {"learning_rate", baseline.logistic.learning_rate},
                {"max_iter", baseline.logistic.max_iter}, {"tolerance", baseline.logistic.tolerance}});
      break;
    case LearnerKind::NB:
      j.update({{"alpha", baseline.naive_bayes.alpha}, {"var_smoothing", baseline.naive_bayes.var_smoothing}});
      break;
    case LearnerKind::KNN: j["k"] = baseline.knn.k; break;
  }
  return j;
}

LearnerSpec LearnerSpec::from_json(const json& j) {
  auto s = defaults(parse_learner_kind(j.at("kind").get<std::string>()));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  switch (s.kind) {
    case LearnerKind::DT:
      get("max_depth", s.tree.max_depth);
      get("min_leaf", s.tree.min_leaf);
      get("min_gain", s.tree.min_gain);
      get("max_bins", s.tree.max_bins);
      break;
    case LearnerKind::RF:
    case LearnerKind::BAG:
    case LearnerKind::Extra:
      get("n_trees", s.forest.n_trees);
      get("max_depth", s.forest.max_depth);
      get("min_leaf", s.forest.min_leaf);
      get("feature_subsample", s.forest.feature_subsample);
      get("max_bins", s.forest.max_bins);
      break;
    case LearnerKind::GB:
      get("n_rounds", s.boost.n_rounds);
      get("learning_rate", s.boost.learning_rate);
      get("max_depth", s.boost.max_depth);
      get("lambda", s.boost.lambda);
      get("min_child_weight", s.boost.min_child_weight);
      get("subsample", s.boost.subsample);
      get("max_bins", s.boost.max_bins);
      break;
    case LearnerKind::LR:
      get("l2", s.baseline.logistic.l2);
      get("learning_rate", s.baseline.logistic.learning_rate);
      get("max_iter", s.baseline.logistic.max_iter);
      get("tolerance", s.baseline.logistic.tolerance);
      break;
    case LearnerKind::NB:
      get("alpha", s.baseline.naive_bayes.alpha);
      get("var_smoothing", s.baseline.naive_bayes.var_smoothing);
      break;
    case LearnerKind::KNN: get("k", s.baseline.knn.k); break;
  }
  return s;
}

ClassifierPtr fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                          std::uint64_t seed, int threads) {
  switch (spec.kind) {
    case LearnerKind::DT: {
      auto p = spec.tree;
      p.seed = seed;
      return std::make_shared<DecisionTreeModel>(fit_tree(X, y, p), X.cols());
    }
    case LearnerKind::RF:
    case LearnerKind::BAG:
    case LearnerKind::Extra: {
      auto p = spec.forest;
      p.seed = seed;
      return fit_forest(X, y, p, threads);
    }
    case LearnerKind::GB: {
      auto p = spec.boost;
      p.seed = seed;
      return fit_boosted(X, y, p);
    }
    case LearnerKind::LR: return fit_baseline(BaselineKind::MultinomialLogistic, X, y, spec.baseline);
    case LearnerKind::NB: return fit_baseline(BaselineKind::NaiveBayes, X, y, spec.baseline);
    case LearnerKind::KNN: return fit_baseline(BaselineKind::KNN, X, y, spec.baseline);
  }
  throw UnsupportedLearner("unknown learner");
}

// ---------------------------------------------------------------------------

json model_to_json(const Classifier& model) {
  return {{"format", "fmc-model"}, {"version", kModelFormatVersion}, {"kind", model.kind()}, {"model", model.to_json()}};
}

ClassifierPtr model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "fmc-model") throw ParseError("not a model file");
    const int version = j.at("version").get<int>();
    if (version > kModelFormatVersion) {
      throw UnsupportedVersion("model format version " + std::to_string(version) + " is newer than " +
                               std::to_string(kModelFormatVersion));
    }
    if (version < 1) throw UnsupportedVersion("model format version " + std::to_string(version));
    const auto kind = j.at("kind").get<std::string>();
    const auto& m = j.at("model");
    if (kind == "tree") return DecisionTreeModel::from_json(m);
    if (kind == "forest") return ForestModel::from_json(m);
    if (kind == "boosted") return BoostedModel::from_json(m);
    if (kind == "logistic") return LogisticModel::from_json(m);
    if (kind == "naive_bayes") return NaiveBayesModel::from_json(m);
    if (kind == "knn") return KnnModel::from_json(m);
    throw ParseError("unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const Classifier& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(model).dump() << '\n';
}

ClassifierPtr load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("corrupt model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace fmc
