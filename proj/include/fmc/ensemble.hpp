#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmc/learners.hpp"
#include "fmc/local_models.hpp"
#include "fmc/splitter.hpp"

namespace fmc {

/// A level-1 family: learner x modeling scope.
struct FamilySpec {
  LearnerSpec learner;
  SegmentKey key = SegmentKey::Global;

  std::string tag() const;  ///< "RF_global", "BAG_sctg", ...
};

using Roster = std::vector<FamilySpec>;

/// {RF, BAG, Extra} x {global, sctg, naics}.
Roster default_roster();
/// sw, sv, v2w, gc_dist, M1..M5.
std::vector<std::string> default_passthrough();

/// Parses "RF_sctg" style tags; learner parameters come from `base`.
FamilySpec parse_family(std::string_view tag, const LearnerSpec& base);

/// Fitted families available for voting, in insertion order.
struct ModelRegistry {
  std::vector<SegmentedModel> families;
};

struct PoolEntry {
  SegmentKey source;
  LearnerKind learner;
  const BoundModel* model;
};
using ModelPool = std::vector<PoolEntry>;

/// SCTG-local, NAICS-local and global predictors for one record, restricted
/// to `types`. A family without a local model for the record's category
/// contributes its fallback. Throws NoModelsAvailable on an empty pool.
ModelPool collect_models_for_record(const FeatureTable& t, std::size_t row, const std::set<LearnerKind>& types,
                                    const ModelRegistry& registry);

/// Unweighted mean. Throws NoModelsAvailable on an empty input.
ProbVector vote_average(std::span<const ProbVector> outputs);

/// Record-at-a-time voting through collect_models_for_record.
ProbVector vote_record(const FeatureTable& t, std::size_t row, const std::set<LearnerKind>& types,
                       const ModelRegistry& registry);
/// Batched equivalent: mean of every selected family's predictions.
ProbMatrix vote_predict(const FeatureTable& t, const std::set<LearnerKind>& types, const ModelRegistry& registry);
ProbMatrix vote_predict(const FeatureTable& t, const std::vector<const SegmentedModel*>& members);

/// Column names of the meta-feature matrix: "<learner>_p<c>_<scope>" per
/// roster family and class, then the passthrough features.
std::vector<std::string> meta_layout(const std::vector<std::string>& family_tags,
                                     const std::vector<std::string>& passthrough);

struct MetaFeatures {
  Eigen::MatrixXd X;
  std::vector<std::string> layout;
  std::vector<int> row_fold;
  /// [family][row]: bit f set when a row of fold f was among the training
  /// rows of the model that produced this row's probabilities.
  std::vector<std::vector<std::uint64_t>> producer_folds;

  /// (family, row) pairs whose producer saw the row's own fold, plus rows
  /// never filled.
  std::size_t leakage_violations() const;
};

struct StackOptions {
  std::size_t min_samples = 50;
  ColumnSelection columns;
  BoostParams meta;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// For each fold f every family is refit on the other folds (segmented
/// families refit per category) and predicts fold f. Rows align with `train`.
MetaFeatures build_oof_meta_features(const FeatureTable& train, const Roster& roster,
                                     const std::vector<std::string>& passthrough, const FoldAssignment& folds,
                                     const StackOptions& options);

class StackedModel {
 public:
  Roster roster;
  std::vector<std::string> passthrough;
  int k = 5;
  std::vector<std::string> layout;
  std::vector<SegmentedModel> level1;  ///< deployment fits, roster order
  std::shared_ptr<BoostedModel> meta;

  /// Level-1 probabilities in roster order plus passthrough. Throws
  /// SchemaMismatch when the level-1 order no longer matches the layout.
  Eigen::MatrixXd meta_features(const FeatureTable& t) const;
  ProbMatrix predict(const FeatureTable& t) const;
  ProbVector predict_stacked(const FeatureTable& t, std::size_t row) const;

  /// Saves level-1 families, the meta-learner and a manifest into `dir`.
  std::filesystem::path save(const std::filesystem::path& dir) const;
  static StackedModel load(const std::filesystem::path& manifest);
};

/// Meta-learner fit on OOF meta-features; the roster is then refit on all
/// rows. `oof`, when given, receives the meta-feature matrix.
StackedModel fit_stacker(const FeatureTable& train, const Roster& roster, const std::vector<std::string>& passthrough,
                         const FoldAssignment& folds, const StackOptions& options, MetaFeatures* oof = nullptr);

ProbVector predict_stacked(const StackedModel& model, const FeatureTable& t, std::size_t row);

}  // namespace fmc
