#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/core.hpp"

namespace fmc {

/// Rows are truth, columns are prediction.
template <typename Count = std::int64_t>
using ConfusionCounts = Eigen::Matrix<Count, kNumModes, kNumModes>;

struct ConfusionMatrix {
  ConfusionCounts<> counts = ConfusionCounts<>::Zero();

  std::int64_t total() const { return counts.sum(); }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws LengthMismatch on unequal lengths and EmptyDataset on empty input.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths);

struct Metrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;  ///< mean recall over classes with support > 0
  double precision_w = 0.0;        ///< support-weighted
  double recall_w = 0.0;
  double f1_w = 0.0;
  double precision_macro = 0.0;    ///< over classes seen in truth or prediction
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  ProbVector precision = ProbVector::Zero();
  ProbVector recall = ProbVector::Zero();
  ProbVector f1 = ProbVector::Zero();
  ModeRow<std::int64_t> support = ModeRow<std::int64_t>::Zero();
};

/// Throws EmptyMatrix when the matrix has no counts.
template <typename Count>
Metrics metrics(const ConfusionCounts<Count>& cm);
inline Metrics metrics(const ConfusionMatrix& cm) { return metrics(cm.counts); }

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  ModeLabel mode = ModeLabel::ForHireTruck;
  std::vector<RocPoint> points;  ///< from (0,0) at threshold +inf to (1,1)
  double auc = 0.0;
};

/// One-vs-rest ROC for class `cls` over raw scores. Thresholds sit at the
/// distinct scores; tied scores form one diagonal step. Throws UndefinedAuc
/// when the class has no positives or no negatives.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> truths, int cls);
RocCurve roc_curve(const ProbMatrix& probabilities, std::span<const int> truths, ModeLabel mode);

/// Sample standard deviation of accuracy over B with-replacement resamples.
double bootstrap_se_accuracy(std::span<const int> predictions, std::span<const int> truths, int B,
                             std::uint64_t seed);

/// Everything reported for one model on one evaluation set.
struct EvalReport {
  std::size_t n = 0;
  ConfusionMatrix cm;
  Metrics m;
  std::array<double, kNumModes> auc{};  ///< NaN where undefined
  double mean_auc = 0.0;                ///< over defined classes
  double se_accuracy = 0.0;
  std::vector<RocCurve> roc;            ///< defined classes only
};

struct EvalOptions {
  int bootstrap = 1000;
  bool roc = true;
  std::uint64_t seed = 0;
};

EvalReport evaluate(const ProbMatrix& probabilities, std::span<const int> truths, const EvalOptions& options);

nlohmann::json to_json(const Metrics& m);
/// Metrics, confusion matrix, per-mode AUC (null when undefined) and SE.
nlohmann::json to_json(const EvalReport& r);

/// threshold,fpr,tpr
void write_roc_csv(std::ostream& out, const RocCurve& curve);

}  // namespace fmc
