#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/core.hpp"
#include "fmc/splitter.hpp"

namespace fmc {

// ---------------------------------------------------------------------------
// Derived per-mode distances

struct OdModeKey {
  std::string orig;
  std::string dest;
  ModeLabel mode;

  auto operator<=>(const OdModeKey&) const = default;
};

struct DistanceEntry {
  double median_mi = 0.0;
  std::size_t support = 0;

  bool operator==(const DistanceEntry&) const = default;
};

/// Median routed miles per (origin, destination, mode), built from training
/// records only.
class DistanceTable {
 public:
  std::optional<DistanceEntry> find(const std::string& orig, const std::string& dest, ModeLabel mode) const;
  void insert(OdModeKey key, DistanceEntry entry);
  std::size_t size() const { return entries_.size(); }
  const std::map<OdModeKey, DistanceEntry>& entries() const { return entries_; }

  /// CSV columns: orig,dest,mode,median_mi,support (mode as ordinal 1..5).
  void write_csv(std::ostream& out) const;
  static DistanceTable read_csv(std::istream& in);

  bool operator==(const DistanceTable&) const = default;

 private:
  std::map<OdModeKey, DistanceEntry> entries_;
};

/// Exact median: middle element, or mean of the middle two. Reorders input.
double median_of(std::vector<double>& values);

DistanceTable build_distance_table(std::span<const ShipmentRecord> train);
/// Same, restricted to `rows` of `records`.
DistanceTable build_distance_table(std::span<const ShipmentRecord> records, std::span<const std::size_t> rows);

/// routed = intercept + slope * gc, fitted per mode.
struct LinearFit {
  double intercept = 0.0;
  double slope = 1.0;
  std::size_t n_fit = 0;
  bool fallback = true;  ///< identity line used (too few points or no gc variance)

  bool operator==(const LinearFit&) const = default;
};

struct ImputationModel {
  std::array<LinearFit, kNumModes> per_mode;

  /// Imputed miles for a mode, clamped at zero.
  double impute(ModeLabel mode, double gc_dist_mi) const;

  nlohmann::json to_json() const;
  static ImputationModel from_json(const nlohmann::json& j);
  bool operator==(const ImputationModel&) const = default;
};

/// Ordinary least squares of routed on great-circle distance, per mode.
ImputationModel fit_imputation(std::span<const ShipmentRecord> train);
ImputationModel fit_imputation(std::span<const ShipmentRecord> records, std::span<const std::size_t> rows);

/// M1..M5 in miles and I1..I5 as 0/1.
struct DerivedDistances {
  ModeRow<double> miles = ModeRow<double>::Zero();
  ModeRow<double> imputed = ModeRow<double>::Zero();

  bool operator==(const DerivedDistances& o) const { return miles == o.miles && imputed == o.imputed; }
};

DerivedDistances derive_distances(const ShipmentRecord& record, const DistanceTable& table, const ImputationModel& imp);

/// Out-of-fold derivation: a record in fold f gets distances from a table and
/// regression built on every other fold.
std::vector<DerivedDistances> derive_training_features_oob(std::span<const ShipmentRecord> train,
                                                           const FoldAssignment& folds);

void write_derived_csv(std::ostream& out, std::span<const ShipmentRecord> records,
                       std::span<const DerivedDistances> derived);
/// Reads id,M1..M5,I1..I5 rows; returned in file order with their ids.
std::vector<std::pair<std::string, DerivedDistances>> read_derived_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Feature schema and assembly

enum class FeatureKind { Numeric, OneHot, Flag };

/// One model input column. One-hot columns carry their block name and level.
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::string block;
  std::string level;

  bool operator==(const FeatureSpec&) const = default;
};

struct SchemaOptions {
  bool with_derived = true;
  bool include_sctg = true;
  bool include_naics = true;
  bool include_export = true;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features, bool with_derived);

  /// Canonical layout: sw, sv, v2w, gc_dist, M1..M5, I1..I5, sctg_n, orig_type,
  /// dest_type, haz, temp_cntl, export, then optional sctg and naics blocks.
  static FeatureSchema build(const SchemaOptions& options, int n_sctg_groups, std::vector<std::string> sctg_vocab,
                             std::vector<std::string> naics_vocab);

  const std::vector<FeatureSpec>& features() const { return features_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(features_.size()); }
  bool with_derived() const { return with_derived_; }
  std::vector<std::string> names() const;

  /// Throws UnknownFeature.
  Eigen::Index index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  /// Column indices of features whose block is not in `excluded`.
  std::vector<Eigen::Index> columns_without(std::initializer_list<std::string_view> excluded) const;
  FeatureSchema subset(std::span<const Eigen::Index> columns) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureSpec> features_;
  bool with_derived_ = true;
};

/// Block names used by the canonical layout.
namespace block {
inline constexpr std::string_view kDerivedMiles = "M";
inline constexpr std::string_view kDerivedFlags = "I";
inline constexpr std::string_view kSctg = "sctg";
inline constexpr std::string_view kNaics = "naics";
}  // namespace block

/// Throws NonpositiveWeight when weight_lb <= 0.
Eigen::RowVectorXd assemble_features(const ShipmentRecord& record, const DerivedDistances& derived,
                                     const FeatureSchema& schema, const AreaTypeLookup& areas);

/// Dense design matrix plus the per-row keys the segmented and ensemble
/// layers dispatch on.
struct FeatureTable {
  FeatureSchema schema;
  Eigen::MatrixXd X;
  std::vector<int> y;  ///< class index 0..4
  std::vector<std::string> ids;
  std::vector<std::string> sctg;
  std::vector<std::string> naics;

  std::size_t rows() const { return y.size(); }
  FeatureTable subset(std::span<const std::size_t> rows) const;
};

FeatureTable build_feature_table(std::span<const ShipmentRecord> records, std::span<const DerivedDistances> derived,
                                 const FeatureSchema& schema, const AreaTypeLookup& areas);

/// Sorted distinct codes.
std::vector<std::string> sctg_vocabulary(std::span<const ShipmentRecord> records);
std::vector<std::string> naics_vocabulary(std::span<const ShipmentRecord> records);

}  // namespace fmc
