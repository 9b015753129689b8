#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/core.hpp"
#include "fmc/tree.hpp"

namespace fmc {

/// Common surface of every level-1 learner and the meta-learner.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string_view kind() const = 0;
  virtual Eigen::Index n_features() const = 0;
  /// One probability row per input row. Throws SchemaMismatch on a column
  /// count different from the fitted one.
  virtual ProbMatrix predict(const Eigen::MatrixXd& X) const = 0;
  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_width(Eigen::Index cols) const;
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

ProbMatrix predict_proba(const Classifier& model, const Eigen::MatrixXd& X);
ProbVector predict_proba(const Classifier& model, const Eigen::RowVectorXd& x);
/// Argmax of each probability row, ties to the lowest mode index.
std::vector<int> hard_labels(const ProbMatrix& P);

// ---------------------------------------------------------------------------
// Trees and forests

class DecisionTreeModel final : public Classifier {
 public:
  DecisionTreeModel(ClassTree tree, Eigen::Index n_features) : tree_(std::move(tree)), n_features_(n_features) {}

  std::string_view kind() const override { return "tree"; }
  Eigen::Index n_features() const override { return n_features_; }
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<DecisionTreeModel> from_json(const nlohmann::json& j);

  const ClassTree& tree() const { return tree_; }

 private:
  ClassTree tree_;
  Eigen::Index n_features_;
};

enum class ForestVariant { RF, BAG, Extra };
std::string_view variant_name(ForestVariant v);

struct ForestParams {
  int n_trees = 200;
  ForestVariant variant = ForestVariant::RF;
  int max_depth = -1;
  double min_leaf = 5.0;
  int feature_subsample = 0;  ///< 0: sqrt(p) for RF/Extra, p for BAG
  int bootstrap = -1;         ///< -1: per variant (RF/BAG on, Extra off)
  int max_bins = 255;
  std::uint64_t seed = 0;

  bool uses_bootstrap() const { return bootstrap < 0 ? variant != ForestVariant::Extra : bootstrap != 0; }
  int candidates(Eigen::Index n_features) const;
};

class ForestModel final : public Classifier {
 public:
  ForestModel(std::vector<ClassTree> trees, ForestParams params, Eigen::Index n_features)
      : trees_(std::move(trees)), params_(params), n_features_(n_features) {}

  std::string_view kind() const override { return "forest"; }
  Eigen::Index n_features() const override { return n_features_; }
  /// Mean of member-tree leaf distributions.
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<ForestModel> from_json(const nlohmann::json& j);

  const std::vector<ClassTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

 private:
  std::vector<ClassTree> trees_;
  ForestParams params_;
  Eigen::Index n_features_;
};

std::shared_ptr<ForestModel> fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, const ForestParams& params,
                                        int threads = 1);

// ---------------------------------------------------------------------------
// Newton-boosted softmax ensemble

struct BoostParams {
  int n_rounds = 200;
  double learning_rate = 0.1;
  int max_depth = 6;
  double lambda = 1.0;
  double min_child_weight = 1.0;
  double subsample = 1.0;
  int max_bins = 255;
  std::uint64_t seed = 0;
};

class BoostedModel final : public Classifier {
 public:
  using Round = std::array<RegressionTree, kNumModes>;

  BoostedModel(ProbVector base_scores, double learning_rate, std::vector<Round> rounds, Eigen::Index n_features)
      : base_scores_(base_scores), learning_rate_(learning_rate), rounds_(std::move(rounds)), n_features_(n_features) {}

  std::string_view kind() const override { return "boosted"; }
  Eigen::Index n_features() const override { return n_features_; }
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  /// Pre-softmax scores: base + lr * sum of round outputs.
  ProbMatrix margins(const Eigen::MatrixXd& X) const;
  nlohmann::json to_json() const override;
  static std::shared_ptr<BoostedModel> from_json(const nlohmann::json& j);

  const ProbVector& base_scores() const { return base_scores_; }
  double learning_rate() const { return learning_rate_; }
  const std::vector<Round>& rounds() const { return rounds_; }

 private:
  ProbVector base_scores_;
  double learning_rate_;
  std::vector<Round> rounds_;
  Eigen::Index n_features_;
};

/// Row-wise softmax.
ProbMatrix softmax_rows(const ProbMatrix& margins);

/// `loss_trace`, when given, receives the mean training cross-entropy after
/// each round.
std::shared_ptr<BoostedModel> fit_boosted(const Eigen::MatrixXd& X, std::span<const int> y, const BoostParams& params,
                                          std::vector<double>* loss_trace = nullptr);

// ---------------------------------------------------------------------------
// Baselines

/// z-score parameters; zero-variance columns keep scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

struct LogisticParams {
  double l2 = 1e-4;
  double learning_rate = 0.5;
  int max_iter = 500;
  double tolerance = 1e-6;
};

class LogisticModel final : public Classifier {
 public:
  LogisticModel(Standardizer standardizer, Eigen::MatrixXd weights, ProbVector bias)
      : std_(std::move(standardizer)), weights_(std::move(weights)), bias_(bias) {}

  std::string_view kind() const override { return "logistic"; }
  Eigen::Index n_features() const override { return weights_.rows(); }
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<LogisticModel> from_json(const nlohmann::json& j);

 private:
  Standardizer std_;
  Eigen::MatrixXd weights_;  // p x 5
  ProbVector bias_;
};

std::shared_ptr<LogisticModel> fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y,
                                            const LogisticParams& params);

struct NaiveBayesParams {
  double alpha = 1.0;            ///< Laplace smoothing for binary features
  double var_smoothing = 1e-9;   ///< fraction of the largest variance added to every variance
};

class NaiveBayesModel final : public Classifier {
 public:
  struct State {
    ProbVector log_prior;
    std::vector<bool> binary;     // per feature
    Eigen::MatrixXd mean;         // 5 x p (gaussian) or P(x=1) (binary)
    Eigen::MatrixXd var;          // 5 x p, gaussian only
  };
  explicit NaiveBayesModel(State s) : s_(std::move(s)) {}

  std::string_view kind() const override { return "naive_bayes"; }
  Eigen::Index n_features() const override { return s_.mean.cols(); }
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<NaiveBayesModel> from_json(const nlohmann::json& j);

 private:
  State s_;
};

std::shared_ptr<NaiveBayesModel> fit_naive_bayes(const Eigen::MatrixXd& X, std::span<const int> y,
                                                 const NaiveBayesParams& params);

struct KnnParams {
  int k = 5;
};

class KnnModel final : public Classifier {
 public:
  KnnModel(Standardizer standardizer, Eigen::MatrixXd reference, std::vector<int> labels, int k)
      : std_(std::move(standardizer)), ref_(std::move(reference)), labels_(std::move(labels)), k_(k) {}

  std::string_view kind() const override { return "knn"; }
  Eigen::Index n_features() const override { return ref_.cols(); }
  /// Class shares among the k nearest reference rows (Euclidean, standardized).
  ProbMatrix predict(const Eigen::MatrixXd& X) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<KnnModel> from_json(const nlohmann::json& j);

 private:
  Standardizer std_;
  Eigen::MatrixXd ref_;  // standardized
  std::vector<int> labels_;
  int k_;
};

/// Throws InvalidK when k > rows.
std::shared_ptr<KnnModel> fit_knn(const Eigen::MatrixXd& X, std::span<const int> y, const KnnParams& params);

enum class BaselineKind { MultinomialLogistic, NaiveBayes, KNN };

struct BaselineParams {
  LogisticParams logistic;
  NaiveBayesParams naive_bayes;
  KnnParams knn;
};

ClassifierPtr fit_baseline(BaselineKind kind, const Eigen::MatrixXd& X, std::span<const int> y,
                           const BaselineParams& params = {});

// ---------------------------------------------------------------------------
// Learner specs

enum class LearnerKind { DT, RF, BAG, Extra, GB, LR, NB, KNN };

std::string_view learner_name(LearnerKind k);
/// Accepts DT, RF, BAG, Extra, GB, LR, NB, KNN (case-insensitive); SVM, MLP and
/// ADA (and anything else) raise UnsupportedLearner.
LearnerKind parse_learner_kind(std::string_view name);
bool is_tree_family(LearnerKind k);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::RF;
  TreeParams tree;
  ForestParams forest;
  BoostParams boost;
  BaselineParams baseline;

  nlohmann::json to_json() const;
  static LearnerSpec from_json(const nlohmann::json& j);
  static LearnerSpec defaults(LearnerKind kind);
};

/// Fits the learner; `seed` replaces every seed inside the spec.
ClassifierPtr fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                          std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const Classifier& model);
/// Throws UnsupportedVersion for newer format versions, ParseError otherwise.
ClassifierPtr model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const Classifier& model);
ClassifierPtr load_model(const std::filesystem::path& path);

}  // namespace fmc
