#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmc/learners.hpp"
#include "fmc/local_models.hpp"
#include "fmc/splitter.hpp"
#include "fmc/synth.hpp"

namespace fmc {

inline constexpr int kArtifactVersion = 1;

enum class Stage { Synth, Ingest, Split, Featurize, Train, Evaluate, Explain, Report };
std::string_view stage_name(Stage s);

struct PathsConfig {
  std::string input;       ///< PUF-schema CSV; empty selects the synthetic scenario
  std::string sctg_map;    ///< sctg,group CSV; empty uses the built-in table
  std::string area_types;  ///< area,type CSV; empty uses the synthetic world's areas
  std::string output_dir = "run";
};

/// One column block of the comparison report: scope, inputs and training rows.
struct PanelSpec {
  char id = 'a';
  SegmentKey key = SegmentKey::Global;
  bool with_derived = false;
  bool capped = false;  ///< trained on global_cap sampled records
  std::string title;
};

/// Panels (a)..(f). Panel (g) combines scopes and is handled separately.
const std::vector<PanelSpec>& scope_panels();

struct RunConfig {
  std::uint64_t seed = 2024;
  int threads = 1;
  bool strict = false;
  PathsConfig paths;
  SynthConfig synth;  ///< its seed is derived from `seed`

  double test_fraction = 0.2;
  int folds = 5;

  std::size_t global_cap = 10000;
  std::size_t min_samples = 50;
  std::vector<LearnerKind> panel_learners = {LearnerKind::LR, LearnerKind::DT, LearnerKind::KNN, LearnerKind::NB,
                                             LearnerKind::RF, LearnerKind::GB, LearnerKind::BAG, LearnerKind::Extra};
  /// Members of the per-panel Vote and Stack columns.
  std::vector<LearnerKind> panel_ensemble = {LearnerKind::RF, LearnerKind::BAG, LearnerKind::Extra};
  std::map<LearnerKind, LearnerSpec> learners;  ///< overrides of LearnerSpec::defaults
  std::vector<std::string> roster;              ///< family tags of panel (g)
  std::vector<std::string> passthrough;
  BoostParams meta;

  int bootstrap = 1000;
  bool roc = true;

  char explain_panel = 'b';
  std::vector<LearnerKind> explain_learners = {LearnerKind::RF, LearnerKind::GB};
  std::size_t shap_sample = 500;
  ModeLabel dependence_class = ModeLabel::Air;

  std::string scenarios = "abcdefg";  ///< panels to train / evaluate / report

  RunConfig();

  LearnerSpec spec(LearnerKind kind) const;
  bool synthetic() const { return paths.input.empty(); }
  bool wants(char panel) const { return scenarios.find(panel) != std::string::npos; }

  nlohmann::json to_json() const;
  /// Throws ConfigError on unknown keys, bad values or missing referenced files.
  static RunConfig from_json(const nlohmann::json& j);
  /// Reads a config file, then applies FMC_INPUT, FMC_OUTPUT_DIR and
  /// FMC_THREADS from the environment.
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;

  /// Hex digest of every setting that affects artifacts (threads, output
  /// directory and scenario selection excluded).
  std::string hash() const;
};

/// Per-stage manifest stored as <output_dir>/<stage>/manifest.json.
struct StageManifest {
  Stage stage = Stage::Synth;
  int version = kArtifactVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json summary = nlohmann::json::object();

  nlohmann::json to_json() const;
  static StageManifest from_json(const nlohmann::json& j);
};

std::filesystem::path stage_dir(const RunConfig& config, Stage stage);
/// Missing manifest -> StageOrderError; other config hash -> StaleArtifactError;
/// other artifact version -> UnsupportedVersion.
StageManifest require_stage(const RunConfig& config, Stage stage);
bool stage_done(const RunConfig& config, Stage stage);

/// Each command checks its upstream manifests, writes its artifacts and
/// manifest, and returns the manifest summary.
nlohmann::json cmd_synth(const RunConfig& config);
nlohmann::json cmd_ingest(const RunConfig& config);
nlohmann::json cmd_split(const RunConfig& config);
nlohmann::json cmd_featurize(const RunConfig& config);
nlohmann::json cmd_train(const RunConfig& config);
nlohmann::json cmd_evaluate(const RunConfig& config);
nlohmann::json cmd_explain(const RunConfig& config);
/// With run_missing, stages without a manifest are run first.
nlohmann::json cmd_report(const RunConfig& config, bool run_missing = false);

/// Train/test feature tables as the train stage sees them (requires the
/// featurize stage).
struct FeatureTables {
  std::vector<ShipmentRecord> train_records;
  std::vector<ShipmentRecord> test_records;
  FoldAssignment folds;
  FeatureTable train;
  FeatureTable test;
};
FeatureTables load_feature_tables(const RunConfig& config);

/// Row indices of the unified panels' training sample.
std::vector<std::size_t> unified_training_rows(const RunConfig& config, std::size_t n_train);

nlohmann::json run_stage(const RunConfig& config, Stage stage);
Stage parse_stage(std::string_view name);

}  // namespace fmc
