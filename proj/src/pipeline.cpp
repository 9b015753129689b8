#include "fmc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "fmc/csv.hpp"
#include "fmc/ensemble.hpp"
#include "fmc/eval.hpp"
#include "fmc/explain.hpp"
#include "fmc/features.hpp"
#include "fmc/ingest.hpp"
#include "fmc/rng.hpp"
#include "fmc/splitter.hpp"

namespace fmc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kAllPanels = "abcdefg";

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("corrupt json " + path.string() + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

json kinds_to_json(const std::vector<LearnerKind>& kinds) {
  json a = json::array();
  for (auto k : kinds) a.push_back(learner_name(k));
  return a;
}

std::vector<LearnerKind> kinds_from_json(const json& j) {
  std::vector<LearnerKind> out;
  for (const auto& e : j) out.push_back(parse_learner_kind(e.get<std::string>()));
  return out;
}

ModeLabel parse_mode_name(std::string_view name) {
  for (auto m : kAllModes)
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json boost_to_json(const BoostParams& b) {
  LearnerSpec s = LearnerSpec::defaults(LearnerKind::GB);
  s.boost = b;
  json j = s.to_json();
  j.erase("kind");
  return j;
}

BoostParams boost_from_json(const json& j) {
  json k = j;
  k["kind"] = "GB";
  return LearnerSpec::from_json(k).boost;
}

SctgGroupMap load_groups(const RunConfig& config) {
  if (config.paths.sctg_map.empty()) return SctgGroupMap::default_map();
  auto in = open_in(config.paths.sctg_map);
  return SctgGroupMap::from_csv(in);
}

std::string panel_key(char id) { return std::string(1, id); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Synth: return "synth";
    case Stage::Ingest: return "ingest";
    case Stage::Split: return "split";
    case Stage::Featurize: return "featurize";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Explain: return "explain";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (auto s : {Stage::Synth, Stage::Ingest, Stage::Split, Stage::Featurize, Stage::Train, Stage::Evaluate,
                 Stage::Explain, Stage::Report})
    if (stage_name(s) == name) return s;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

const std::vector<PanelSpec>& scope_panels() {
  static const std::vector<PanelSpec> panels = {
      {'a', SegmentKey::Global, false, true, "Unified models (without derived distance, capped training sample)"},
      {'b', SegmentKey::Global, true, true, "Unified models (with derived distance, capped training sample)"},
      {'c', SegmentKey::Naics, false, false, "Local models per NAICS code (without derived distance)"},
      {'d', SegmentKey::Naics, true, false, "Local models per NAICS code (with derived distance)"},
      {'e', SegmentKey::Sctg, false, false, "Local models per SCTG code (without derived distance)"},
      {'f', SegmentKey::Sctg, true, false, "Local models per SCTG code (with derived distance)"},
  };
  return panels;
}

RunConfig::RunConfig() {
  for (auto k : {LearnerKind::DT, LearnerKind::RF, LearnerKind::BAG, LearnerKind::Extra, LearnerKind::GB,
                 LearnerKind::LR, LearnerKind::NB, LearnerKind::KNN})
    learners.emplace(k, LearnerSpec::defaults(k));
  for (const auto& f : default_roster()) roster.push_back(f.tag());
  passthrough = default_passthrough();
  meta.n_rounds = 100;
  meta.max_depth = 4;
}

LearnerSpec RunConfig::spec(LearnerKind kind) const {
  auto it = learners.find(kind);
  return it == learners.end() ? LearnerSpec::defaults(kind) : it->second;
}

json RunConfig::to_json() const {
  json synth_j = synth.to_json();
  synth_j.erase("seed");
  json learners_j = json::object();
  for (const auto& [kind, s] : learners) {
    json j = s.to_json();
    j.erase("kind");
    learners_j[std::string(learner_name(kind))] = j;
  }
  return {{"seed", seed},
          {"threads", threads},
          {"strict", strict},
          {"paths",
           {{"input", paths.input},
            {"sctg_map", paths.sctg_map},
            {"area_types", paths.area_types},
            {"output_dir", paths.output_dir}}},
          {"synth", synth_j},
          {"split", {{"test_fraction", test_fraction}, {"folds", folds}}},
          {"train",
           {{"global_cap", global_cap},
            {"min_samples", min_samples},
            {"panel_learners", kinds_to_json(panel_learners)},
            {"panel_ensemble", kinds_to_json(panel_ensemble)},
            {"learners", learners_j},
            {"roster", roster},
            {"passthrough", passthrough},
            {"meta", boost_to_json(meta)}}},
          {"evaluate", {{"bootstrap", bootstrap}, {"roc", roc}}},
          {"explain",
           {{"panel", panel_key(explain_panel)},
            {"learners", kinds_to_json(explain_learners)},
            {"shap_sample", shap_sample},
            {"dependence_class", mode_name(dependence_class)}}},
          {"scenarios", scenarios}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "threads", "strict", "paths", "synth", "split", "train", "evaluate", "explain", "scenarios"},
                   "config");
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.strict = j.value("strict", c.strict);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"input", "sctg_map", "area_types", "output_dir"}, "paths");
      c.paths.input = p.value("input", c.paths.input);
      c.paths.sctg_map = p.value("sctg_map", c.paths.sctg_map);
      c.paths.area_types = p.value("area_types", c.paths.area_types);
      c.paths.output_dir = p.value("output_dir", c.paths.output_dir);
    }
    if (j.contains("synth")) {
      if (j.at("synth").contains("seed")) throw ConfigError("synth.seed is derived from the run seed");
      c.synth = SynthConfig::from_json(j.at("synth"));
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown(s, {"test_fraction", "folds"}, "split");
      c.test_fraction = s.value("test_fraction", c.test_fraction);
      c.folds = s.value("folds", c.folds);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"global_cap", "min_samples", "panel_learners", "panel_ensemble", "learners", "roster",
                         "passthrough", "meta"},
                     "train");
      c.global_cap = t.value("global_cap", c.global_cap);
      c.min_samples = t.value("min_samples", c.min_samples);
      if (t.contains("panel_learners")) c.panel_learners = kinds_from_json(t.at("panel_learners"));
      if (t.contains("panel_ensemble")) c.panel_ensemble = kinds_from_json(t.at("panel_ensemble"));
      if (t.contains("learners")) {
        for (const auto& [name, overrides] : t.at("learners").items()) {
          const LearnerKind kind = parse_learner_kind(name);
          json merged = c.spec(kind).to_json();
          merged.update(overrides);
          merged["kind"] = learner_name(kind);
          c.learners[kind] = LearnerSpec::from_json(merged);
        }
      }
      if (t.contains("roster")) c.roster = t.at("roster").get<std::vector<std::string>>();
      if (t.contains("passthrough")) c.passthrough = t.at("passthrough").get<std::vector<std::string>>();
      if (t.contains("meta")) {
        json merged = boost_to_json(c.meta);
        merged.update(t.at("meta"));
        c.meta = boost_from_json(merged);
      }
    }
    if (j.contains("evaluate")) {
      const auto& e = j.at("evaluate");
      reject_unknown(e, {"bootstrap", "roc"}, "evaluate");
      c.bootstrap = e.value("bootstrap", c.bootstrap);
      c.roc = e.value("roc", c.roc);
    }
    if (j.contains("explain")) {
      const auto& e = j.at("explain");
      reject_unknown(e, {"panel", "learners", "shap_sample", "dependence_class"}, "explain");
      const auto panel = e.value("panel", panel_key(c.explain_panel));
      if (panel.size() != 1) throw ConfigError("explain.panel must be one letter");
      c.explain_panel = panel[0];
      if (e.contains("learners")) c.explain_learners = kinds_from_json(e.at("learners"));
      c.shap_sample = e.value("shap_sample", c.shap_sample);
      if (e.contains("dependence_class")) c.dependence_class = parse_mode_name(e.at("dependence_class").get<std::string>());
    }
    c.scenarios = j.value("scenarios", c.scenarios);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  } catch (const UnsupportedLearner& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  RunConfig c = path.empty() ? RunConfig{} : from_json(read_json(path));
  if (const char* v = std::getenv("FMC_INPUT")) c.paths.input = v;
  if (const char* v = std::getenv("FMC_OUTPUT_DIR")) c.paths.output_dir = v;
  if (const char* v = std::getenv("FMC_THREADS")) {
    try {
      c.threads = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError("FMC_THREADS must be an integer");
    }
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must be in (0, 1)");
  if (folds < 2 || folds > 64) throw ConfigError("folds must be in [2, 64]");
  if (global_cap < 1) throw ConfigError("global_cap must be positive");
  if (panel_learners.empty()) throw ConfigError("panel_learners is empty");
  if (panel_ensemble.empty()) throw ConfigError("panel_ensemble is empty");
  for (auto k : panel_ensemble) {
    if (std::find(panel_learners.begin(), panel_learners.end(), k) == panel_learners.end())
      throw ConfigError("panel_ensemble member " + std::string(learner_name(k)) + " is not a panel learner");
  }
  if (roster.empty()) throw ConfigError("roster is empty");
  std::set<std::string> tags;
  for (const auto& t : roster) {
    try {
      parse_family(t, LearnerSpec::defaults(LearnerKind::RF));
    } catch (const Error& e) {
      throw ConfigError("bad roster entry '" + t + "': " + e.what());
    }
    if (!tags.insert(t).second) throw ConfigError("duplicate roster entry '" + t + "'");
  }
  if (explain_panel != 'a' && explain_panel != 'b') throw ConfigError("explain.panel must be a unified panel (a or b)");
  for (auto k : explain_learners) {
    if (!is_tree_family(k)) throw ConfigError("explain learner " + std::string(learner_name(k)) + " is not tree-based");
  }
  if (shap_sample < 1) throw ConfigError("shap_sample must be positive");
  for (char ch : scenarios) {
    if (kAllPanels.find(ch) == std::string_view::npos) throw ConfigError(std::string("unknown scenario '") + ch + "'");
  }
  if (paths.output_dir.empty()) throw ConfigError("paths.output_dir is empty");
  for (const auto* p : {&paths.input, &paths.sctg_map, &paths.area_types}) {
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("file not found: " + *p);
  }
  if (!synthetic() && paths.area_types.empty()) throw ConfigError("paths.area_types is required for real input");
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("threads");
  j.erase("scenarios");
  j["paths"].erase("output_dir");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// Manifests

json StageManifest::to_json() const {
  return {{"stage", stage_name(stage)},
          {"version", version},
          {"config_hash", config_hash},
          {"seed", seed},
          {"summary", summary}};
}

StageManifest StageManifest::from_json(const json& j) {
  try {
    StageManifest m;
    m.stage = parse_stage(j.at("stage").get<std::string>());
    m.version = j.at("version").get<int>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.summary = j.at("summary");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed stage manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
}

fs::path stage_dir(const RunConfig& config, Stage stage) { return fs::path(config.paths.output_dir) / stage_name(stage); }

bool stage_done(const RunConfig& config, Stage stage) { return fs::exists(stage_dir(config, stage) / "manifest.json"); }

StageManifest require_stage(const RunConfig& config, Stage stage) {
  const auto path = stage_dir(config, stage) / "manifest.json";
  if (!fs::exists(path))
    throw StageOrderError("stage '" + std::string(stage_name(stage)) + "' has not run (no " + path.string() + ")");
  auto m = StageManifest::from_json(read_json(path));
  if (m.version != kArtifactVersion)
    throw UnsupportedVersion("stage '" + std::string(stage_name(stage)) + "' artifact version " +
                             std::to_string(m.version));
  if (m.config_hash != config.hash())
    throw StaleArtifactError("stage '" + std::string(stage_name(stage)) + "' was produced by config " +
                             m.config_hash + ", current config is " + config.hash());
  return m;
}

namespace {

fs::path fresh_stage_dir(const RunConfig& config, Stage stage) {
  const auto dir = stage_dir(config, stage);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json finish_stage(const RunConfig& config, Stage stage, json summary) {
  StageManifest m;
  m.stage = stage;
  m.config_hash = config.hash();
  m.seed = config.seed;
  m.summary = std::move(summary);
  write_json(stage_dir(config, stage) / "manifest.json", m.to_json());
  return m.summary;
}

// ---------------------------------------------------------------------------
// Workspace loading

struct Workspace {
  std::vector<ShipmentRecord> records;
  SplitAssignment split;
  FoldAssignment folds;
  std::vector<ShipmentRecord> train;
  std::vector<ShipmentRecord> test;
  AreaTypeLookup areas;
  FeatureSchema schema;
  FeatureTable train_table;
  FeatureTable test_table;
};

std::vector<ShipmentRecord> load_ingested(const RunConfig& config) {
  require_stage(config, Stage::Ingest);
  auto in = open_in(stage_dir(config, Stage::Ingest) / "records.csv");
  auto result = parse_shipments(in, ColumnMap{}, load_groups(config), IngestOptions{true});
  return std::move(result.records);
}

AreaTypeLookup load_areas(const RunConfig& config) {
  if (!config.paths.area_types.empty()) {
    auto in = open_in(config.paths.area_types);
    return AreaTypeLookup::from_csv(in);
  }
  require_stage(config, Stage::Synth);
  auto in = open_in(stage_dir(config, Stage::Synth) / "area_types.csv");
  return AreaTypeLookup::from_csv(in);
}

void check_ids(std::span<const ShipmentRecord> records, const std::vector<std::string>& ids, const std::string& what) {
  if (ids.size() != records.size()) throw SchemaMismatch(what + ": row count differs from records");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != records[i].id) throw SchemaMismatch(what + ": id mismatch at row " + std::to_string(i));
  }
}

/// Records, split and folds; features only when `with_features`.
Workspace load_workspace(const RunConfig& config, bool with_features) {
  Workspace w;
  w.records = load_ingested(config);
  require_stage(config, Stage::Split);
  const auto split_dir = stage_dir(config, Stage::Split);
  {
    auto in = open_in(split_dir / "split.csv");
    w.split = read_split_csv(in);
  }
  std::vector<std::string> ids;
  for (const auto& r : w.records) ids.push_back(r.id);
  if (w.split.ids != ids) throw SchemaMismatch("split ids do not match ingested records");
  for (auto i : w.split.indices(Partition::Train)) w.train.push_back(w.records[i]);
  for (auto i : w.split.indices(Partition::Test)) w.test.push_back(w.records[i]);
  {
    auto in = open_in(split_dir / "folds.csv");
    w.folds = read_folds_csv(in);
  }
  check_ids(w.train, w.folds.ids, "folds");
  if (!with_features) return w;

  require_stage(config, Stage::Featurize);
  const auto fdir = stage_dir(config, Stage::Featurize);
  w.areas = load_areas(config);
  w.schema = FeatureSchema::from_json(read_json(fdir / "schema.json"));
  auto load_derived = [&](const std::string& file, std::span<const ShipmentRecord> rows) {
    auto in = open_in(fdir / file);
    auto pairs = read_derived_csv(in);
    std::vector<std::string> pids;
    std::vector<DerivedDistances> d;
    for (auto& [id, dd] : pairs) {
      pids.push_back(id);
      d.push_back(dd);
    }
    check_ids(rows, pids, file);
    return d;
  };
  const auto dtrain = load_derived("train_derived.csv", w.train);
  const auto dtest = load_derived("test_derived.csv", w.test);
  w.train_table = build_feature_table(w.train, dtrain, w.schema, w.areas);
  w.test_table = build_feature_table(w.test, dtest, w.schema, w.areas);
  return w;
}

std::vector<std::size_t> capped_rows(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (cap >= n) return rows;
  Rng rng(seed);
  rng.shuffle(rows);
  rows.resize(cap);
  std::sort(rows.begin(), rows.end());
  return rows;
}

FoldAssignment subset_folds(const FoldAssignment& folds, std::span<const std::size_t> rows) {
  FoldAssignment out;
  out.k = folds.k;
  for (auto r : rows) {
    out.ids.push_back(folds.ids[r]);
    out.folds.push_back(folds.folds[r]);
  }
  return out;
}

/// Passthrough columns available to a panel: derived-distance columns are
/// dropped when the panel runs without them.
std::vector<std::string> panel_passthrough(const RunConfig& config, const FeatureSchema& schema, bool with_derived) {
  std::vector<std::string> out;
  for (const auto& name : config.passthrough) {
    const auto& f = schema.features()[static_cast<std::size_t>(schema.index_of(name))];
    if (!with_derived && (f.block == block::kDerivedMiles || f.block == block::kDerivedFlags)) continue;
    out.push_back(name);
  }
  return out;
}

std::string variant_name(bool with_derived) { return with_derived ? "with" : "without"; }

Roster panel_roster(const RunConfig& config, SegmentKey key) {
  Roster r;
  for (auto k : config.panel_ensemble) r.push_back({config.spec(k), key});
  return r;
}

Roster combined_roster(const RunConfig& config) {
  Roster r;
  for (const auto& tag : config.roster) {
    auto f = parse_family(tag, LearnerSpec::defaults(LearnerKind::RF));
    f.learner = config.spec(f.learner.kind);
    r.push_back(std::move(f));
  }
  return r;
}

std::string rel(const fs::path& path, const fs::path& base) { return fs::relative(path, base).generic_string(); }

}  // namespace

// ---------------------------------------------------------------------------
// Stages

json cmd_synth(const RunConfig& config) {
  config.validate();
  if (!config.synthetic()) throw ConfigError("synth stage runs only without paths.input");
  const auto dir = fresh_stage_dir(config, Stage::Synth);
  SynthConfig sc = config.synth;
  sc.seed = derive_seed(config.seed, "synth");
  const SynthWorld world = make_world(sc);
  const SynthData data = generate(world, config.threads);
  write_with(dir / "shipments.csv", [&](std::ostream& o) { write_shipments(o, data.records); });
  write_with(dir / "truth.csv", [&](std::ostream& o) { write_truth_csv(o, data.truth); });
  write_with(dir / "area_types.csv", [&](std::ostream& o) { world.area_lookup().write_csv(o); });
  write_json(dir / "world.json", world.to_json());
  return finish_stage(config, Stage::Synth,
                      {{"records", data.records.size()},
                       {"bayes_accuracy", bayes_accuracy(data.records, data.truth)},
                       {"expected_bayes_accuracy", expected_bayes_accuracy(data.truth)}});
}

json cmd_ingest(const RunConfig& config) {
  config.validate();
  fs::path input = config.paths.input;
  if (config.synthetic()) {
    require_stage(config, Stage::Synth);
    input = stage_dir(config, Stage::Synth) / "shipments.csv";
  }
  const auto groups = load_groups(config);
  auto in = open_in(input);
  const auto result = parse_shipments(in, ColumnMap{}, groups, IngestOptions{config.strict});
  if (result.records.empty()) throw EmptyDataset("no records accepted from " + input.string());
  const auto dir = fresh_stage_dir(config, Stage::Ingest);
  write_with(dir / "records.csv", [&](std::ostream& o) { write_shipments(o, result.records); });
  const auto& r = result.report;
  json summary = {{"total_rows", r.total_rows},
                  {"accepted", r.accepted},
                  {"rejected_unmatched_mode", r.rejected_unmatched_mode},
                  {"rejected_invalid_field", r.rejected_invalid_field},
                  {"unmatched_fraction", r.unmatched_fraction()},
                  {"column_errors", r.column_errors}};
  write_json(dir / "report.json", summary);
  return finish_stage(config, Stage::Ingest, summary);
}

json cmd_split(const RunConfig& config) {
  config.validate();
  const auto records = load_ingested(config);
  const auto split = stratified_split(records, config.test_fraction, derive_seed(config.seed, "split"));
  std::vector<ShipmentRecord> train;
  for (auto i : split.indices(Partition::Train)) train.push_back(records[i]);
  const auto folds = stratified_kfold(train, config.folds, derive_seed(config.seed, "folds"));
  const auto dir = fresh_stage_dir(config, Stage::Split);
  write_with(dir / "split.csv", [&](std::ostream& o) { write_split_csv(o, split); });
  write_with(dir / "folds.csv", [&](std::ostream& o) { write_folds_csv(o, folds); });
  return finish_stage(config, Stage::Split,
                      {{"train", train.size()}, {"test", records.size() - train.size()}, {"folds", config.folds}});
}

json cmd_featurize(const RunConfig& config) {
  config.validate();
  const auto w = load_workspace(config, false);
  const auto areas = load_areas(config);
  const auto dtrain = derive_training_features_oob(w.train, w.folds);
  const auto table = build_distance_table(w.train);
  const auto imp = fit_imputation(w.train);
  std::vector<DerivedDistances> dtest;
  dtest.reserve(w.test.size());
  for (const auto& r : w.test) dtest.push_back(derive_distances(r, table, imp));
  const auto schema =
      FeatureSchema::build({}, load_groups(config).num_groups(), sctg_vocabulary(w.train), naics_vocabulary(w.train));
  // fail early on area codes outside the lookup
  for (const auto* set : {&w.train, &w.test})
    for (const auto& r : *set) {
      areas.type_of(r.orig_area);
      areas.type_of(r.dest_area);
    }
  const auto dir = fresh_stage_dir(config, Stage::Featurize);
  write_with(dir / "distance_table.csv", [&](std::ostream& o) { table.write_csv(o); });
  write_json(dir / "imputation.json", imp.to_json());
  write_with(dir / "train_derived.csv", [&](std::ostream& o) { write_derived_csv(o, w.train, dtrain); });
  write_with(dir / "test_derived.csv", [&](std::ostream& o) { write_derived_csv(o, w.test, dtest); });
  write_json(dir / "schema.json", schema.to_json());
  return finish_stage(config, Stage::Featurize,
                      {{"features", schema.size()}, {"distance_entries", table.size()}});
}

json cmd_train(const RunConfig& config) {
  config.validate();
  const auto w = load_workspace(config, true);
  const auto dir = fresh_stage_dir(config, Stage::Train);
  json models = json::object();
  json leakage = json::object();

  for (const auto& p : scope_panels()) {
    if (!config.wants(p.id)) continue;
    const auto id = panel_key(p.id);
    const auto rows = p.capped ? unified_training_rows(config, w.train_table.rows())
                               : capped_rows(w.train_table.rows(), w.train_table.rows(), 0);
    ColumnSelection columns;
    columns.with_derived = p.with_derived;
    json panel = json::object();
    for (auto kind : config.panel_learners) {
      const std::string name(learner_name(kind));
      SegmentOptions o;
      o.min_samples = config.min_samples;
      o.columns = columns;
      o.seed = derive_seed(config.seed, "train/" + id + "/" + name);
      o.threads = config.threads;
      const auto m = fit_segmented(w.train_table, rows, p.key, config.spec(kind), o);
      panel[name] = rel(m.save(dir / id), dir);
    }
    const FeatureTable sub = p.capped ? w.train_table.subset(rows) : w.train_table;
    StackOptions so;
    so.min_samples = config.min_samples;
    so.columns = columns;
    so.meta = config.meta;
    so.seed = derive_seed(config.seed, "train/" + id + "/stack");
    so.threads = config.threads;
    MetaFeatures oof;
    const auto stack = fit_stacker(sub, panel_roster(config, p.key), panel_passthrough(config, w.schema, p.with_derived),
                                   subset_folds(w.folds, rows), so, &oof);
    panel["Stack"] = rel(stack.save(dir / id / "stack"), dir);
    leakage[id] = oof.leakage_violations();
    models[id] = panel;
  }

  if (config.wants('g')) {
    json panel = json::object();
    for (bool with : {false, true}) {
      ColumnSelection columns;
      columns.with_derived = with;
      StackOptions so;
      so.min_samples = config.min_samples;
      so.columns = columns;
      so.meta = config.meta;
      so.seed = derive_seed(config.seed, "train/g/" + variant_name(with));
      so.threads = config.threads;
      MetaFeatures oof;
      const auto stack = fit_stacker(w.train_table, combined_roster(config),
                                     panel_passthrough(config, w.schema, with), w.folds, so, &oof);
      panel[variant_name(with)] = rel(stack.save(dir / "g" / variant_name(with)), dir);
      leakage["g/" + variant_name(with)] = oof.leakage_violations();
    }
    models["g"] = panel;
  }
  return finish_stage(config, Stage::Train,
                      {{"models", models}, {"oof_leakage_violations", leakage}, {"train_rows", w.train_table.rows()}});
}

namespace {

struct Evaluator {
  const RunConfig& config;
  const FeatureTable& test;
  fs::path roc_dir;
  EvalOptions options;

  json operator()(const ProbMatrix& P, const std::string& panel, const std::string& model) const {
    const auto report = evaluate(P, test.y, options);
    if (config.roc) {
      for (const auto& curve : report.roc) {
        write_with(roc_dir / panel / (model + "." + std::string(mode_name(curve.mode)) + ".csv"),
                   [&](std::ostream& o) { write_roc_csv(o, curve); });
      }
    }
    return to_json(report);
  }
};

double bayes_on_test(const RunConfig& config, std::span<const ShipmentRecord> test, double* expected) {
  auto in = open_in(stage_dir(config, Stage::Synth) / "truth.csv");
  const auto truth = read_truth_csv(in);
  std::map<std::string, const TruthRow*> by_id;
  for (const auto& t : truth) by_id[t.id] = &t;
  std::vector<TruthRow> aligned;
  for (const auto& r : test) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw SchemaMismatch("no truth row for " + r.id);
    aligned.push_back(*it->second);
  }
  *expected = expected_bayes_accuracy(aligned);
  return bayes_accuracy(test, aligned);
}

}  // namespace

json cmd_evaluate(const RunConfig& config) {
  config.validate();
  const auto trained = require_stage(config, Stage::Train);
  const auto w = load_workspace(config, true);
  const auto train_dir = stage_dir(config, Stage::Train);
  const auto dir = fresh_stage_dir(config, Stage::Evaluate);
  EvalOptions eo;
  eo.bootstrap = config.bootstrap;
  eo.roc = config.roc;
  eo.seed = derive_seed(config.seed, "evaluate/bootstrap");
  const Evaluator eval{config, w.test_table, dir / "roc", eo};

  const auto& models = trained.summary.at("models");
  json panels = json::object();
  for (const auto& p : scope_panels()) {
    const auto id = panel_key(p.id);
    if (!config.wants(p.id)) continue;
    if (!models.contains(id)) throw StageOrderError("panel " + id + " was not trained");
    const auto& entry = models.at(id);
    json out = json::object();
    std::map<LearnerKind, SegmentedModel> loaded;
    for (auto kind : config.panel_learners) {
      const std::string name(learner_name(kind));
      auto m = SegmentedModel::load(train_dir / entry.at(name).get<std::string>());
      out[name] = eval(m.predict(w.test_table), id, name);
      loaded.emplace(kind, std::move(m));
    }
    std::vector<const SegmentedModel*> members;
    for (auto k : config.panel_ensemble) members.push_back(&loaded.at(k));
    out["Vote"] = eval(vote_predict(w.test_table, members), id, "Vote");
    const auto stack = StackedModel::load(train_dir / entry.at("Stack").get<std::string>());
    out["Stack"] = eval(stack.predict(w.test_table), id, "Stack");
    panels[id] = out;
  }
  if (config.wants('g')) {
    if (!models.contains("g")) throw StageOrderError("panel g was not trained");
    json out = json::object();
    for (bool with : {false, true}) {
      const auto v = variant_name(with);
      const auto stack = StackedModel::load(train_dir / models.at("g").at(v).get<std::string>());
      json variant = json::object();
      std::vector<const SegmentedModel*> members;
      for (const auto& m : stack.level1) {
        variant[m.tag()] = eval(m.predict(w.test_table), "g", v + "." + m.tag());
        members.push_back(&m);
      }
      variant["Vote"] = eval(vote_predict(w.test_table, members), "g", v + ".Vote");
      variant["Stack"] = eval(stack.predict(w.test_table), "g", v + ".Stack");
      out[v] = variant;
    }
    panels["g"] = out;
  }

  json metrics = {{"config_hash", config.hash()}, {"seed", config.seed}, {"n_test", w.test.size()}, {"panels", panels}};
  if (config.synthetic()) {
    double expected = 0.0;
    const double realized = bayes_on_test(config, w.test, &expected);
    metrics["bayes"] = {{"test_accuracy", realized}, {"expected_accuracy", expected}};
  }
  write_json(dir / "metrics.json", metrics);
  return finish_stage(config, Stage::Evaluate, {{"metrics", "metrics.json"}, {"n_test", w.test.size()}});
}

json cmd_explain(const RunConfig& config) {
  config.validate();
  const auto trained = require_stage(config, Stage::Train);
  const auto w = load_workspace(config, true);
  const auto id = panel_key(config.explain_panel);
  const auto& models = trained.summary.at("models");
  if (!models.contains(id)) throw StageOrderError("panel " + id + " was not trained");
  const auto dir = fresh_stage_dir(config, Stage::Explain);

  // shared record sample across learners
  auto rows = capped_rows(w.test_table.rows(), config.shap_sample, derive_seed(config.seed, "explain/sample"));
  std::vector<Eigen::Index> row_index(rows.begin(), rows.end());
  std::vector<std::string> ids;
  for (auto r : rows) ids.push_back(w.test_table.ids[r]);

  json summary = json::object();
  for (auto kind : config.explain_learners) {
    const std::string name(learner_name(kind));
    if (!models.at(id).contains(name)) throw StageOrderError("learner " + name + " was not trained in panel " + id);
    const auto m = SegmentedModel::load(stage_dir(config, Stage::Train) / models.at(id).at(name).get<std::string>());
    const BoundModel& bound = m.fallback;
    const auto cols = resolve_columns(w.schema, bound.columns);
    const Eigen::MatrixXd X = w.test_table.X(row_index, cols);
    const auto out = dir / (id + "_" + name);

    std::optional<ImportanceReport> importance;
    if (auto* dt = dynamic_cast<const DecisionTreeModel*>(bound.model.get())) importance = impurity_importance(*dt, bound.columns);
    if (auto* rf = dynamic_cast<const ForestModel*>(bound.model.get())) importance = impurity_importance(*rf, bound.columns);
    if (auto* gb = dynamic_cast<const BoostedModel*>(bound.model.get())) importance = gain_importance(*gb, bound.columns);
    if (importance) write_with(out / "importance.csv", [&](std::ostream& o) { importance->write_csv(o); });

    const auto shap = explain_records(*bound.model, bound.columns, X, ids, config.threads);
    const auto ss = shap_summary(shap);
    write_with(out / "shap_summary.csv", [&](std::ostream& o) { write_summary_csv(o, ss); });
    write_with(out / "shap_swarm.csv", [&](std::ostream& o) { write_swarm_csv(o, shap); });

    const int cls = mode_index(config.dependence_class);
    std::vector<std::size_t> order(ss.features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return ss.mean_abs(static_cast<Eigen::Index>(a), cls) > ss.mean_abs(static_cast<Eigen::Index>(b), cls);
    });
    const auto& feature = ss.features[order[0]];
    const auto& interaction = ss.features[order.size() > 1 ? order[1] : order[0]];
    write_with(out / "shap_dependence.csv", [&](std::ostream& o) {
      write_dependence_csv(o, shap_dependence_export(shap, feature, interaction, cls));
    });
    write_json(out / "force.json", force_json(shap, 0));

    summary[name] = {{"scale", shap_scale_name(shap.scale)},
                     {"records", shap.records()},
                     {"local_accuracy_error", shap.local_accuracy_error()},
                     {"dependence_feature", feature},
                     {"dependence_interaction", interaction},
                     {"top_features", [&] {
                        json top = json::array();
                        for (std::size_t i = 0; i < std::min<std::size_t>(5, ss.ranking.size()); ++i)
                          top.push_back(ss.features[ss.ranking[i]]);
                        return top;
                      }()}};
  }
  return finish_stage(config, Stage::Explain, {{"panel", id}, {"models", summary}});
}

namespace {

const std::vector<std::pair<std::string, std::string>>& report_rows() {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"Accuracy", "accuracy"}, {"BA", "balanced_accuracy"}, {"Precision", "precision"},
      {"Recall", "recall"},     {"F1", "f1"},                {"sigma(Accuracy)", "se_accuracy"}};
  return rows;
}

void markdown_table(std::ostream& o, const std::vector<std::string>& columns, const std::vector<const json*>& cells) {
  o << "| |";
  for (const auto& c : columns) o << ' ' << c << " |";
  o << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) o << "---|";
  o << '\n';
  for (const auto& [label, key] : report_rows()) {
    o << "| " << label << " |";
    for (const auto* cell : cells) o << ' ' << fixed3(cell->at(key).get<double>()) << " |";
    o << '\n';
  }
  o << '\n';
}

double best_accuracy(const json& panel, const std::vector<std::string>& columns) {
  double best = 0.0;
  for (const auto& c : columns) best = std::max(best, panel.at(c).at("accuracy").get<double>());
  return best;
}

}  // namespace

json cmd_report(const RunConfig& config, bool run_missing) {
  config.validate();
  if (run_missing) {
    std::vector<Stage> chain = {Stage::Ingest, Stage::Split, Stage::Featurize, Stage::Train, Stage::Evaluate};
    if (config.synthetic()) chain.insert(chain.begin(), Stage::Synth);
    for (auto s : chain)
      if (!stage_done(config, s)) run_stage(config, s);
  }
  require_stage(config, Stage::Evaluate);
  const json metrics = read_json(stage_dir(config, Stage::Evaluate) / "metrics.json");
  const auto& panels = metrics.at("panels");
  const auto dir = fresh_stage_dir(config, Stage::Report);

  std::vector<std::string> columns;
  for (auto k : config.panel_learners) columns.emplace_back(learner_name(k));
  std::vector<std::string> with_ensembles = columns;
  with_ensembles.push_back("Vote");
  with_ensembles.push_back("Stack");

  std::ostringstream md;
  md << "# Mode choice model comparison\n\n";
  md << "Test records: " << metrics.at("n_test").get<std::size_t>() << "\n\n";
  json table = json::object();
  for (const auto& p : scope_panels()) {
    const auto id = panel_key(p.id);
    if (!panels.contains(id)) continue;
    md << "## (" << id << ") " << p.title << "\n\n";
    std::vector<const json*> cells;
    json t = json::object();
    for (const auto& c : with_ensembles) {
      cells.push_back(&panels.at(id).at(c));
      for (const auto& [label, key] : report_rows()) t[c][label] = panels.at(id).at(c).at(key);
    }
    markdown_table(md, with_ensembles, cells);
    table[id] = t;
  }
  if (panels.contains("g")) {
    md << "## (g) Ensemble over local and unified families\n\n";
    std::vector<std::string> gcols;
    std::vector<const json*> cells;
    json t = json::object();
    for (const auto* model : {"Vote", "Stack"})
      for (bool with : {false, true}) {
        const auto v = variant_name(with);
        const auto col = std::string(model) + " (" + v + " derived)";
        gcols.push_back(col);
        cells.push_back(&panels.at("g").at(v).at(model));
        for (const auto& [label, key] : report_rows()) t[col][label] = panels.at("g").at(v).at(model).at(key);
      }
    markdown_table(md, gcols, cells);
    table["g"] = t;
  }

  // countermeasure ablation: best accuracy after each step
  json ablation = json::array();
  auto step = [&](const std::string& name, double acc) {
    const double prev = ablation.empty() ? acc : ablation.back().at("accuracy").get<double>();
    ablation.push_back({{"step", name}, {"accuracy", acc}, {"gain", acc - prev}});
  };
  if (panels.contains("a")) step("unified, without derived distance (a)", best_accuracy(panels.at("a"), with_ensembles));
  if (panels.contains("b")) step("+ derived distance (b)", best_accuracy(panels.at("b"), with_ensembles));
  double local = 0.0;
  for (const char* id : {"d", "f"})
    if (panels.contains(id)) local = std::max(local, best_accuracy(panels.at(id), with_ensembles));
  if (local > 0) step("+ local models per category (d, f)", local);
  if (panels.contains("g")) step("+ ensemble over families (g)", panels.at("g").at("with").at("Stack").at("accuracy").get<double>());

  if (!ablation.empty()) {
    md << "## Countermeasure ablation\n\n| step | best accuracy | gain |\n|---|---|---|\n";
    for (const auto& s : ablation)
      md << "| " << s.at("step").get<std::string>() << " | " << fixed3(s.at("accuracy").get<double>()) << " | "
         << fixed3(s.at("gain").get<double>()) << " |\n";
    md << '\n';
  }
  json out = {{"config_hash", config.hash()}, {"panels", table}, {"ablation", ablation}};
  if (metrics.contains("bayes")) {
    out["bayes"] = metrics.at("bayes");
    md << "Bayes accuracy on the test set: " << fixed3(metrics.at("bayes").at("test_accuracy").get<double>()) << "\n";
  }
  write_text(dir / "report.md", md.str());
  write_json(dir / "report.json", out);
  return finish_stage(config, Stage::Report, {{"ablation", ablation}});
}

FeatureTables load_feature_tables(const RunConfig& config) {
  auto w = load_workspace(config, true);
  return {std::move(w.train), std::move(w.test), std::move(w.folds), std::move(w.train_table), std::move(w.test_table)};
}

std::vector<std::size_t> unified_training_rows(const RunConfig& config, std::size_t n_train) {
  return capped_rows(n_train, config.global_cap, derive_seed(config.seed, "train/cap"));
}

json run_stage(const RunConfig& config, Stage stage) {
  switch (stage) {
    case Stage::Synth: return cmd_synth(config);
    case Stage::Ingest: return cmd_ingest(config);
    case Stage::Split: return cmd_split(config);
    case Stage::Featurize: return cmd_featurize(config);
    case Stage::Train: return cmd_train(config);
    case Stage::Evaluate: return cmd_evaluate(config);
    case Stage::Explain: return cmd_explain(config);
    case Stage::Report: return cmd_report(config, false);
  }
  throw ConfigError("unknown stage");
}

}  // namespace fmc
