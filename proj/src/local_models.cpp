#include "fmc/local_models.hpp"

#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fmc/parallel.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& X, std::span<const std::size_t> rows,
                       const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto src = X.col(cols[c]);
    auto dst = out.col(static_cast<Eigen::Index>(c));
    for (std::size_t r = 0; r < rows.size(); ++r) dst(static_cast<Eigen::Index>(r)) = src(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

std::string file_safe(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

std::string_view segment_key_name(SegmentKey k) {
  switch (k) {
    case SegmentKey::Global: return "global";
    case SegmentKey::Sctg: return "sctg";
    case SegmentKey::Naics: return "naics";
  }
  return "?";
}

SegmentKey parse_segment_key(std::string_view name) {
  if (name == "global") return SegmentKey::Global;
  if (name == "sctg") return SegmentKey::Sctg;
  if (name == "naics") return SegmentKey::Naics;
  throw ConfigError("unknown segment key '" + std::string(name) + "'");
}

const std::string& category_of(const FeatureTable& t, std::size_t row, SegmentKey key) {
  static const std::string kNone;
  switch (key) {
    case SegmentKey::Sctg: return t.sctg[row];
    case SegmentKey::Naics: return t.naics[row];
    case SegmentKey::Global: break;
  }
  return kNone;
}

nlohmann::json ColumnSelection::to_json() const {
  return {{"with_derived", with_derived}, {"include_sctg", include_sctg}, {"include_naics", include_naics}};
}

ColumnSelection ColumnSelection::from_json(const nlohmann::json& j) {
  ColumnSelection s;
  s.with_derived = j.value("with_derived", s.with_derived);
  s.include_sctg = j.value("include_sctg", s.include_sctg);
  s.include_naics = j.value("include_naics", s.include_naics);
  return s;
}

std::vector<std::string> select_columns(const FeatureSchema& schema, const ColumnSelection& sel, SegmentKey own) {
  std::vector<std::string> out;
  for (const auto& f : schema.features()) {
    if (!sel.with_derived && (f.block == block::kDerivedMiles || f.block == block::kDerivedFlags)) continue;
    if (f.block == block::kSctg && (!sel.include_sctg || own == SegmentKey::Sctg)) continue;
    if (f.block == block::kNaics && (!sel.include_naics || own == SegmentKey::Naics)) continue;
    out.push_back(f.name);
  }
  return out;
}

std::vector<Eigen::Index> resolve_columns(const FeatureSchema& schema, const std::vector<std::string>& names) {
  std::vector<Eigen::Index> cols;
  cols.reserve(names.size());
  for (const auto& n : names) {
    try {
      cols.push_back(schema.index_of(n));
    } catch (const UnknownFeature&) {
      throw SchemaMismatch("model expects feature '" + n + "' which the table lacks");
    }
  }
  return cols;
}

ProbMatrix BoundModel::predict(const FeatureTable& t) const { return predict(t, all_rows(t.rows())); }

ProbMatrix BoundModel::predict(const FeatureTable& t, std::span<const std::size_t> rows) const {
  return model->predict(gather(t.X, rows, resolve_columns(t.schema, columns)));
}

BoundModel fit_bound(const FeatureTable& train, std::span<const std::size_t> rows, std::vector<std::string> columns,
                     const LearnerSpec& spec, std::uint64_t seed, int threads) {
  const auto X = gather(train.X, rows, resolve_columns(train.schema, columns));
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(train.y[r]);
  return {std::move(columns), fit_learner(spec, X, y, seed, threads)};
}

// ---------------------------------------------------------------------------

std::string SegmentedModel::tag() const {
  return std::string(learner_name(spec.kind)) + "_" + std::string(segment_key_name(key));
}

const BoundModel& SegmentedModel::route(const std::string& category) const {
  auto it = local.find(category);
  return it == local.end() ? fallback : it->second;
}

ProbMatrix SegmentedModel::predict(const FeatureTable& t) const { return predict(t, all_rows(t.rows())); }

ProbMatrix SegmentedModel::predict(const FeatureTable& t, std::span<const std::size_t> rows) const {
  ProbMatrix out(static_cast<Eigen::Index>(rows.size()), kNumModes);
  // Group positions by the model that answers them, then predict in batches.
  std::map<const BoundModel*, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < rows.size(); ++k) groups[&route(category_of(t, rows[k], key))].push_back(k);
  for (const auto& [model, positions] : groups) {
    std::vector<std::size_t> source(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) source[i] = rows[positions[i]];
    const auto P = model->predict(t, source);
    for (std::size_t i = 0; i < positions.size(); ++i) out.row(static_cast<Eigen::Index>(positions[i])) = P.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

ProbVector SegmentedModel::predict_segmented(const FeatureTable& t, std::size_t row) const {
  const std::size_t rows[] = {row};
  return route(category_of(t, row, key)).predict(t, rows).row(0);
}

ProbVector predict_segmented(const SegmentedModel& model, const FeatureTable& t, std::size_t row) {
  return model.predict_segmented(t, row);
}

std::filesystem::path SegmentedModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto stem = tag();
  auto write_bound = [&](const BoundModel& m, const std::string& suffix) {
    const auto name = stem + "." + suffix + ".json";
    save_model(dir / name, *m.model);
    return nlohmann::json{{"file", name}, {"columns", m.columns}};
  };
  nlohmann::json categories = nlohmann::json::array();
  for (const auto& [cat, m] : local) {
    auto entry = write_bound(m, "local-" + file_safe(cat));
    entry["category"] = cat;
    categories.push_back(std::move(entry));
  }
  const nlohmann::json manifest = {{"format", "fmc-segmented"},
                                   {"version", kModelFormatVersion},
                                   {"key", segment_key_name(key)},
                                   {"learner", spec.to_json()},
                                   {"min_samples", min_samples},
                                   {"fallback", write_bound(fallback, "fallback")},
                                   {"categories", std::move(categories)}};
  const auto path = dir / (stem + ".manifest.json");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << manifest.dump(1) << '\n';
  return path;
}

SegmentedModel SegmentedModel::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot read " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "fmc-segmented") throw ParseError("not a segmented-model manifest");
    if (j.at("version").get<int>() > kModelFormatVersion) throw UnsupportedVersion("segmented manifest version");
    const auto dir = manifest_path.parent_path();
    auto read_bound = [&](const nlohmann::json& e) {
      return BoundModel{e.at("columns").get<std::vector<std::string>>(),
                        load_model(dir / e.at("file").get<std::string>())};
    };
    SegmentedModel m;
    m.key = parse_segment_key(j.at("key").get<std::string>());
    m.spec = LearnerSpec::from_json(j.at("learner"));
    m.min_samples = j.at("min_samples").get<std::size_t>();
    m.fallback = read_bound(j.at("fallback"));
    for (const auto& e : j.at("categories")) m.local.emplace(e.at("category").get<std::string>(), read_bound(e));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed segmented manifest: ") + e.what());
  }
}

SegmentedModel fit_segmented(const FeatureTable& train, std::span<const std::size_t> rows, SegmentKey key,
                             const LearnerSpec& spec, const SegmentOptions& options) {
  if (rows.empty()) throw EmptyDataset("no rows to fit a segmented model on");
  SegmentedModel m;
  m.key = key;
  m.spec = spec;
  m.min_samples = options.min_samples;
  if (options.fallback) {
    m.fallback = *options.fallback;
  } else {
    m.fallback = fit_bound(train, rows, select_columns(train.schema, options.columns, SegmentKey::Global), spec,
                           derive_seed(options.seed, "segment/fallback"), options.threads);
  }
  if (key == SegmentKey::Global) return m;

  std::map<std::string, std::vector<std::size_t>> by_category;
  for (auto r : rows) by_category[category_of(train, r, key)].push_back(r);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> jobs;
  for (auto& [cat, members] : by_category) {
    if (members.size() >= options.min_samples) jobs.emplace_back(cat, std::move(members));
  }
  const auto columns = select_columns(train.schema, options.columns, key);
  std::vector<BoundModel> fitted(jobs.size());
  parallel_for(jobs.size(), options.threads, [&](std::size_t i) {
    fitted[i] = fit_bound(train, jobs[i].second, columns, spec, derive_seed(options.seed, "segment/" + jobs[i].first));
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) m.local.emplace(jobs[i].first, std::move(fitted[i]));
  return m;
}

SegmentedModel fit_segmented(const FeatureTable& train, SegmentKey key, const LearnerSpec& spec,
                             const SegmentOptions& options) {
  return fit_segmented(train, all_rows(train.rows()), key, spec, options);
}

}  // namespace fmc
