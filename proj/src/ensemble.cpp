#include "fmc/ensemble.hpp"

#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fmc/rng.hpp"

namespace fmc {
namespace {

constexpr int kLayoutVersion = 1;

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void check_roster(const Roster& roster) {
  if (roster.empty()) throw NoModelsAvailable("empty roster");
  std::set<std::string> seen;
  for (const auto& f : roster) {
    if (!seen.insert(f.tag()).second) throw ConfigError("duplicate roster family " + f.tag());
  }
}

/// Fits every family on `rows`, letting segmented families reuse a global
/// family of the same learner spec as their fallback.
std::vector<SegmentedModel> fit_families(const FeatureTable& train, std::span<const std::size_t> rows,
                                         const Roster& roster, const StackOptions& options, std::string_view stage,
                                         std::uint64_t index) {
  std::vector<SegmentedModel> out(roster.size());
  std::vector<bool> done(roster.size(), false);
  auto fit_one = [&](std::size_t i, const BoundModel* fallback) {
    SegmentOptions so;
    so.min_samples = options.min_samples;
    so.columns = options.columns;
    so.threads = options.threads;
    so.seed = derive_seed(options.seed, std::string(stage) + "/" + roster[i].tag(), index);
    so.fallback = fallback;
    out[i] = fit_segmented(train, rows, roster[i].key, roster[i].learner, so);
    done[i] = true;
  };
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (roster[i].key == SegmentKey::Global) fit_one(i, nullptr);
  }
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (done[i]) continue;
    const BoundModel* fallback = nullptr;
    for (std::size_t g = 0; g < roster.size(); ++g) {
      if (roster[g].key == SegmentKey::Global && roster[g].learner.to_json() == roster[i].learner.to_json()) {
        fallback = &out[g].fallback;
      }
    }
    fit_one(i, fallback);
  }
  return out;
}

std::vector<std::string> tags_of(const std::vector<SegmentedModel>& models) {
  std::vector<std::string> tags;
  for (const auto& m : models) tags.push_back(m.tag());
  return tags;
}

}  // namespace

std::string FamilySpec::tag() const {
  return std::string(learner_name(learner.kind)) + "_" + std::string(segment_key_name(key));
}

Roster default_roster() {
  Roster r;
  for (auto kind : {LearnerKind::RF, LearnerKind::BAG, LearnerKind::Extra}) {
    for (auto key : {SegmentKey::Global, SegmentKey::Sctg, SegmentKey::Naics}) {
      r.push_back({LearnerSpec::defaults(kind), key});
    }
  }
  return r;
}

std::vector<std::string> default_passthrough() {
  return {"sw", "sv", "v2w", "gc_dist", "M1", "M2", "M3", "M4", "M5"};
}

FamilySpec parse_family(std::string_view tag, const LearnerSpec& base) {
  const auto cut = tag.rfind('_');
  if (cut == std::string_view::npos) throw ConfigError("family tag '" + std::string(tag) + "' lacks a scope");
  FamilySpec f;
  f.learner = base;
  f.learner.kind = parse_learner_kind(tag.substr(0, cut));
  f.key = parse_segment_key(tag.substr(cut + 1));
  return f;
}

ModelPool collect_models_for_record(const FeatureTable& t, std::size_t row, const std::set<LearnerKind>& types,
                                    const ModelRegistry& registry) {
  ModelPool pool;
  for (auto key : {SegmentKey::Sctg, SegmentKey::Naics, SegmentKey::Global}) {
    for (const auto& fam : registry.families) {
      if (fam.key != key || !types.count(fam.spec.kind)) continue;
      pool.push_back({key, fam.spec.kind, &fam.route(category_of(t, row, key))});
    }
  }
  if (pool.empty()) throw NoModelsAvailable("no fitted model matches the requested types");
  return pool;
}

ProbVector vote_average(std::span<const ProbVector> outputs) {
  if (outputs.empty()) throw NoModelsAvailable("nothing to vote over");
  ProbVector sum = ProbVector::Zero();
  for (const auto& p : outputs) sum += p;
  return sum / static_cast<double>(outputs.size());
}

ProbVector vote_record(const FeatureTable& t, std::size_t row, const std::set<LearnerKind>& types,
                       const ModelRegistry& registry) {
  const auto pool = collect_models_for_record(t, row, types, registry);
  std::vector<ProbVector> outputs;
  const std::size_t rows[] = {row};
  for (const auto& e : pool) outputs.push_back(e.model->predict(t, rows).row(0));
  return vote_average(outputs);
}

ProbMatrix vote_predict(const FeatureTable& t, const std::vector<const SegmentedModel*>& members) {
  if (members.empty()) throw NoModelsAvailable("nothing to vote over");
  ProbMatrix sum = ProbMatrix::Zero(static_cast<Eigen::Index>(t.rows()), kNumModes);
  for (const auto* m : members) sum += m->predict(t);
  return sum / static_cast<double>(members.size());
}

ProbMatrix vote_predict(const FeatureTable& t, const std::set<LearnerKind>& types, const ModelRegistry& registry) {
  std::vector<const SegmentedModel*> members;
  for (const auto& fam : registry.families) {
    if (types.count(fam.spec.kind)) members.push_back(&fam);
  }
  return vote_predict(t, members);
}

std::vector<std::string> meta_layout(const std::vector<std::string>& family_tags,
                                     const std::vector<std::string>& passthrough) {
  std::vector<std::string> out;
  for (const auto& tag : family_tags) {
    const auto cut = tag.rfind('_');
    for (int c = 1; c <= kNumModes; ++c) {
      out.push_back(tag.substr(0, cut) + "_p" + std::to_string(c) + "_" + tag.substr(cut + 1));
    }
  }
  out.insert(out.end(), passthrough.begin(), passthrough.end());
  return out;
}

std::size_t MetaFeatures::leakage_violations() const {
  std::size_t bad = 0;
  for (const auto& fam : producer_folds) {
    for (std::size_t i = 0; i < fam.size(); ++i) {
      if (fam[i] == 0 || (fam[i] >> row_fold[i]) & 1ULL) ++bad;
    }
  }
  return bad;
}

MetaFeatures build_oof_meta_features(const FeatureTable& train, const Roster& roster,
                                     const std::vector<std::string>& passthrough, const FoldAssignment& folds,
                                     const StackOptions& options) {
  check_roster(roster);
  if (folds.folds.size() != train.rows()) throw LengthMismatch("fold assignment does not cover the training rows");
  if (!folds.ids.empty() && folds.ids != train.ids) throw SchemaMismatch("fold assignment ids differ from table ids");
  if (folds.k < 2 || folds.k > 64) throw ConfigError("k must be in [2, 64]");

  const auto width = static_cast<Eigen::Index>(kNumModes * roster.size() + passthrough.size());
  const auto n = train.rows();
  MetaFeatures meta;
  meta.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), width);
  meta.row_fold = folds.folds;
  meta.producer_folds.assign(roster.size(), std::vector<std::uint64_t>(n, 0));
  std::vector<std::string> tags;
  for (const auto& f : roster) tags.push_back(f.tag());
  meta.layout = meta_layout(tags, passthrough);

  for (int f = 0; f < folds.k; ++f) {
    const auto fit_rows = folds.non_members(f);
    const auto held_out = folds.members(f);
    if (held_out.empty()) continue;
    std::uint64_t mask = 0;
    for (auto r : fit_rows) mask |= 1ULL << folds.folds[r];
    const auto models = fit_families(train, fit_rows, roster, options, "oof", static_cast<std::uint64_t>(f));
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto P = models[m].predict(train, held_out);
      for (std::size_t i = 0; i < held_out.size(); ++i) {
        meta.X.block<1, kNumModes>(static_cast<Eigen::Index>(held_out[i]), static_cast<Eigen::Index>(kNumModes * m)) =
            P.row(static_cast<Eigen::Index>(i));
        meta.producer_folds[m][held_out[i]] = mask;
      }
    }
  }
  const auto cols = resolve_columns(train.schema, passthrough);
  const auto offset = static_cast<Eigen::Index>(kNumModes * roster.size());
  for (std::size_t c = 0; c < cols.size(); ++c) meta.X.col(offset + static_cast<Eigen::Index>(c)) = train.X.col(cols[c]);
  return meta;
}

Eigen::MatrixXd StackedModel::meta_features(const FeatureTable& t) const {
  if (meta_layout(tags_of(level1), passthrough) != layout) {
    throw SchemaMismatch("level-1 roster order differs from the fitted meta-feature layout");
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(layout.size()));
  for (std::size_t m = 0; m < level1.size(); ++m) {
    X.middleCols<kNumModes>(static_cast<Eigen::Index>(kNumModes * m)) = level1[m].predict(t);
  }
  const auto cols = resolve_columns(t.schema, passthrough);
  const auto offset = static_cast<Eigen::Index>(kNumModes * level1.size());
  for (std::size_t c = 0; c < cols.size(); ++c) X.col(offset + static_cast<Eigen::Index>(c)) = t.X.col(cols[c]);
  return X;
}

ProbMatrix StackedModel::predict(const FeatureTable& t) const { return meta->predict(meta_features(t)); }

ProbVector StackedModel::predict_stacked(const FeatureTable& t, std::size_t row) const {
  const std::size_t rows[] = {row};
  return predict(t.subset(rows)).row(0);
}

ProbVector predict_stacked(const StackedModel& model, const FeatureTable& t, std::size_t row) {
  return model.predict_stacked(t, row);
}

StackedModel fit_stacker(const FeatureTable& train, const Roster& roster, const std::vector<std::string>& passthrough,
                         const FoldAssignment& folds, const StackOptions& options, MetaFeatures* oof) {
  auto meta = build_oof_meta_features(train, roster, passthrough, folds, options);
  StackedModel s;
  s.roster = roster;
  s.passthrough = passthrough;
  s.k = folds.k;
  s.layout = meta.layout;
  auto mp = options.meta;
  mp.seed = derive_seed(options.seed, "stack/meta");
  s.meta = fit_boosted(meta.X, train.y, mp);
  s.level1 = fit_families(train, all_rows(train.rows()), roster, options, "stack/level1", 0);
  if (oof) *oof = std::move(meta);
  return s;
}

std::filesystem::path StackedModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json families = nlohmann::json::array();
  for (const auto& m : level1) {
    const auto path = m.save(dir / "level1");
    families.push_back({{"tag", m.tag()}, {"manifest", "level1/" + path.filename().string()}});
  }
  save_model(dir / "meta.json", *meta);
  const nlohmann::json manifest = {{"format", "fmc-stack"},
                                   {"version", kModelFormatVersion},
                                   {"layout_version", kLayoutVersion},
                                   {"k", k},
                                   {"roster", std::move(families)},
                                   {"passthrough", passthrough},
                                   {"layout", layout},
                                   {"meta", "meta.json"}};
  const auto path = dir / "stack.manifest.json";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << manifest.dump(1) << '\n';
  return path;
}

StackedModel StackedModel::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot read " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "fmc-stack") throw ParseError("not a stack manifest");
    if (j.at("layout_version").get<int>() != kLayoutVersion) throw UnsupportedVersion("stack layout version");
    const auto dir = manifest_path.parent_path();
    StackedModel s;
    s.k = j.at("k").get<int>();
    s.passthrough = j.at("passthrough").get<std::vector<std::string>>();
    s.layout = j.at("layout").get<std::vector<std::string>>();
    for (const auto& e : j.at("roster")) {
      s.level1.push_back(SegmentedModel::load(dir / e.at("manifest").get<std::string>()));
      s.roster.push_back({s.level1.back().spec, s.level1.back().key});
    }
    auto meta = load_model(dir / j.at("meta").get<std::string>());
    s.meta = std::dynamic_pointer_cast<const BoostedModel>(meta) ? std::const_pointer_cast<BoostedModel>(
                                                                      std::dynamic_pointer_cast<const BoostedModel>(meta))
                                                                : nullptr;
    if (!s.meta) throw ParseError("meta-learner is not a boosted model");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed stack manifest: ") + e.what());
  }
}

}  // namespace fmc
