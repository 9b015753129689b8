#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/learners.hpp"
#include "fmc/tree.hpp"

namespace fmc {

// ---------------------------------------------------------------------------
// Importance

/// Feature name -> importance, normalized to sum 1 (all zero when the model
/// never splits).
struct ImportanceReport {
  std::vector<std::string> features;
  Eigen::VectorXd importance;

  /// Indices sorted by decreasing importance, ties by index.
  std::vector<std::size_t> ranking() const;
  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;  ///< feature,importance in ranked order
};

/// Raw mean-decrease-impurity of one tree: sum over splits of
/// (cover / root cover) * gain, per feature.
template <int Outputs>
Eigen::VectorXd split_importance(const Tree<Outputs>& tree, Eigen::Index n_features);

ImportanceReport impurity_importance(const DecisionTreeModel& model, std::vector<std::string> features);
/// Per-tree impurity importance averaged over trees, then normalized.
ImportanceReport impurity_importance(const ForestModel& model, std::vector<std::string> features);
/// Average split gain per feature over all rounds and classes, normalized.
ImportanceReport gain_importance(const BoostedModel& model, std::vector<std::string> features);

// ---------------------------------------------------------------------------
// Shapley attributions

/// Per-feature, per-output attributions (p x Outputs).
template <int Outputs>
using PhiMatrix = Eigen::Matrix<double, Eigen::Dynamic, Outputs>;

/// Cover-weighted mean leaf value: the tree's output with no feature known.
template <int Outputs>
typename Tree<Outputs>::Value expected_value(const Tree<Outputs>& tree);

/// Path-dependent TreeSHAP. Adds scale * phi into `phi` (p x Outputs).
template <int Outputs>
void tree_shap(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x, PhiMatrix<Outputs>& phi,
               double scale = 1.0);

/// Exact Shapley values by enumerating all 2^p coalitions, where a coalition's
/// value follows known features and cover-weights the unknown ones.
/// Throws TooManyFeatures when p > kMaxBruteForceFeatures.
inline constexpr Eigen::Index kMaxBruteForceFeatures = 12;
template <int Outputs>
PhiMatrix<Outputs> brute_force_shapley(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                       Eigen::Index n_features);

enum class ShapScale { Probability, Margin };
std::string_view shap_scale_name(ShapScale s);

/// One record's explanation: base + column sums of phi = output.
struct ShapValues {
  ShapScale scale = ShapScale::Probability;
  ProbVector base = ProbVector::Zero();
  ProbVector output = ProbVector::Zero();
  PhiMatrix<kNumModes> phi;  ///< p x 5
};

/// Supports tree, forest (probability scale, mean of trees) and boosted
/// models (margin scale). Other learners raise UnsupportedLearner.
ShapValues tree_shap(const Classifier& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);
ShapValues brute_force_shapley(const Classifier& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Attributions for a batch of records.
struct ShapMatrix {
  ShapScale scale = ShapScale::Probability;
  std::vector<std::string> features;
  std::vector<std::string> ids;
  Eigen::MatrixXd X;                         ///< n x p feature values
  ProbVector base = ProbVector::Zero();
  ProbMatrix output;                         ///< n x 5
  std::array<Eigen::MatrixXd, kNumModes> phi;  ///< per class, n x p

  std::size_t records() const { return ids.size(); }
  /// Largest |base + sum phi - output| over records and classes.
  double local_accuracy_error() const;
};

ShapMatrix explain_records(const Classifier& model, std::vector<std::string> features, const Eigen::MatrixXd& X,
                           std::vector<std::string> ids, int threads = 1);

/// Mean |phi| per feature and class, with features ranked by their total.
struct ShapSummary {
  std::vector<std::string> features;
  Eigen::Matrix<double, Eigen::Dynamic, kNumModes> mean_abs;  ///< p x 5
  std::vector<std::size_t> ranking;
};

/// Throws EmptyDataset with no records.
ShapSummary shap_summary(const ShapMatrix& shap);

struct DependencePoint {
  std::string id;
  double value = 0.0;
  double phi = 0.0;
  double interaction = 0.0;
  bool operator==(const DependencePoint&) const = default;
};

/// One point per record for class `cls`. Throws UnknownFeature.
std::vector<DependencePoint> shap_dependence_export(const ShapMatrix& shap, const std::string& feature,
                                                   const std::string& interaction, int cls);

/// summary CSV: class,feature,mean_abs_phi (ranked features per class).
void write_summary_csv(std::ostream& out, const ShapSummary& summary);
/// swarm CSV: record,class,feature,phi,feature_value.
void write_swarm_csv(std::ostream& out, const ShapMatrix& shap);
/// dependence CSV: record,value,phi,interaction; values printed round-trip exact.
void write_dependence_csv(std::ostream& out, const std::vector<DependencePoint>& points);
std::vector<DependencePoint> read_dependence_csv(std::istream& in);
/// {id, scale, base, output, phi: {class: {feature: value}}} for one record.
nlohmann::json force_json(const ShapMatrix& shap, std::size_t record);

}  // namespace fmc
