#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/features.hpp"
#include "fmc/learners.hpp"

namespace fmc {

/// Modeling scope: one model for everything, or one per SCTG / NAICS code.
enum class SegmentKey { Global, Sctg, Naics };

std::string_view segment_key_name(SegmentKey k);  // "global", "sctg", "naics"
SegmentKey parse_segment_key(std::string_view name);

/// Category value of one table row for a key ("" for Global).
const std::string& category_of(const FeatureTable& t, std::size_t row, SegmentKey key);

/// Which schema blocks a model reads.
struct ColumnSelection {
  bool with_derived = true;  ///< M1..M5 and I1..I5
  bool include_sctg = true;
  bool include_naics = true;

  nlohmann::json to_json() const;
  static ColumnSelection from_json(const nlohmann::json& j);
  bool operator==(const ColumnSelection&) const = default;
};

/// Feature names selected from `schema`. A segmented model never sees the
/// one-hot block of its own key.
std::vector<std::string> select_columns(const FeatureSchema& schema, const ColumnSelection& sel, SegmentKey own);

/// Column indices of `names` in `schema`; a missing name is a SchemaMismatch.
std::vector<Eigen::Index> resolve_columns(const FeatureSchema& schema, const std::vector<std::string>& names);

/// A fitted learner bound to named input columns.
struct BoundModel {
  std::vector<std::string> columns;
  ClassifierPtr model;

  ProbMatrix predict(const FeatureTable& t) const;
  ProbMatrix predict(const FeatureTable& t, std::span<const std::size_t> rows) const;
};

BoundModel fit_bound(const FeatureTable& train, std::span<const std::size_t> rows, std::vector<std::string> columns,
                     const LearnerSpec& spec, std::uint64_t seed, int threads = 1);

/// Per-category learners concatenated behind a dispatcher, with a global
/// fallback for categories that were unseen or too small at fit time.
/// A Global-keyed model is just its fallback.
class SegmentedModel {
 public:
  SegmentKey key = SegmentKey::Global;
  LearnerSpec spec;
  std::size_t min_samples = 50;
  BoundModel fallback;
  std::map<std::string, BoundModel> local;

  /// "RF_global", "BAG_sctg", ...
  std::string tag() const;
  bool has_local(const std::string& category) const { return local.count(category) != 0; }
  /// The model that answers for a category.
  const BoundModel& route(const std::string& category) const;

  ProbMatrix predict(const FeatureTable& t) const;
  ProbMatrix predict(const FeatureTable& t, std::span<const std::size_t> rows) const;
  ProbVector predict_segmented(const FeatureTable& t, std::size_t row) const;

  /// Writes <dir>/<tag>.fallback.json, one file per category and a manifest
  /// <dir>/<tag>.manifest.json; returns the manifest path.
  std::filesystem::path save(const std::filesystem::path& dir) const;
  static SegmentedModel load(const std::filesystem::path& manifest);
};

struct SegmentOptions {
  std::size_t min_samples = 50;
  ColumnSelection columns;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Reused as the fallback instead of fitting a fresh global model when set.
  const BoundModel* fallback = nullptr;
};

/// Fits the fallback on all `rows`, then one model per category with at
/// least min_samples rows, each on that category's rows only.
SegmentedModel fit_segmented(const FeatureTable& train, std::span<const std::size_t> rows, SegmentKey key,
                             const LearnerSpec& spec, const SegmentOptions& options);
SegmentedModel fit_segmented(const FeatureTable& train, SegmentKey key, const LearnerSpec& spec,
                             const SegmentOptions& options);

ProbVector predict_segmented(const SegmentedModel& model, const FeatureTable& t, std::size_t row);

}  // namespace fmc
