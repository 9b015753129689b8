#include "fmc/features.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "fmc/csv.hpp"

namespace fmc {
namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<DistanceEntry> DistanceTable::find(const std::string& orig, const std::string& dest,
                                                 ModeLabel mode) const {
  auto it = entries_.find(OdModeKey{orig, dest, mode});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DistanceTable::insert(OdModeKey key, DistanceEntry entry) { entries_[std::move(key)] = entry; }

void DistanceTable::write_csv(std::ostream& out) const {
  out << "orig,dest,mode,median_mi,support\n";
  for (const auto& [key, e] : entries_) {
    out << csv::escape(key.orig) << ',' << csv::escape(key.dest) << ',' << mode_ordinal(key.mode) << ','
        << csv::format_double(e.median_mi) << ',' << e.support << '\n';
  }
}

DistanceTable DistanceTable::read_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw ParseError("distance table: empty");
  const auto c = csv::locate_columns(*header, {"orig", "dest", "mode", "median_mi", "support"});
  DistanceTable table;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() != header->size()) throw ParseError("distance table: bad row");
    const auto mode = csv::parse_double((*row)[c[2]]);
    const auto median = csv::parse_double((*row)[c[3]]);
    const auto support = csv::parse_double((*row)[c[4]]);
    if (!mode || !median || !support || *support < 1) throw ParseError("distance table: bad number");
    table.insert({(*row)[c[0]], (*row)[c[1]], mode_from_ordinal(static_cast<int>(*mode))},
                 {*median, static_cast<std::size_t>(*support)});
  }
  return table;
}

double median_of(std::vector<double>& values) {
  const auto n = values.size();
  if (n == 0) throw EmptyDataset("median of empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

DistanceTable build_distance_table(std::span<const ShipmentRecord> train) {
  const auto rows = all_rows(train.size());
  return build_distance_table(train, rows);
}

DistanceTable build_distance_table(std::span<const ShipmentRecord> records, std::span<const std::size_t> rows) {
  std::map<OdModeKey, std::vector<double>> samples;
  for (auto i : rows) {
    const auto& r = records[i];
    samples[OdModeKey{r.orig_area, r.dest_area, r.mode}].push_back(r.routed_dist_mi);
  }
  DistanceTable table;
  for (auto& [key, values] : samples) {
    const auto support = values.size();
    table.insert(key, {median_of(values), support});
  }
  return table;
}

// ---------------------------------------------------------------------------

double ImputationModel::impute(ModeLabel mode, double gc_dist_mi) const {
  const auto& fit = per_mode[static_cast<std::size_t>(mode_index(mode))];
  return std::max(0.0, fit.intercept + fit.slope * gc_dist_mi);
}

nlohmann::json ImputationModel::to_json() const {
  auto arr = nlohmann::json::array();
  for (int m = 0; m < kNumModes; ++m) {
    const auto& f = per_mode[static_cast<std::size_t>(m)];
    arr.push_back({{"mode", m + 1},
                   {"intercept", f.intercept},
                   {"slope", f.slope},
                   {"n_fit", f.n_fit},
                   {"fallback", f.fallback}});
  }
  return {{"per_mode", arr}};
}

ImputationModel ImputationModel::from_json(const nlohmann::json& j) {
  ImputationModel m;
  const auto& arr = j.at("per_mode");
  if (!arr.is_array() || arr.size() != kNumModes) throw ParseError("imputation: expected 5 fits");
  for (const auto& e : arr) {
    auto& f = m.per_mode[static_cast<std::size_t>(mode_index(mode_from_ordinal(e.at("mode").get<int>())))];
    f.intercept = e.at("intercept").get<double>();
    f.slope = e.at("slope").get<double>();
    f.n_fit = e.at("n_fit").get<std::size_t>();
    f.fallback = e.at("fallback").get<bool>();
  }
  return m;
}

ImputationModel fit_imputation(std::span<const ShipmentRecord> train) {
  const auto rows = all_rows(train.size());
  return fit_imputation(train, rows);
}

ImputationModel fit_imputation(std::span<const ShipmentRecord> records, std::span<const std::size_t> rows) {
  // Centered sums per mode; two passes keep the slope numerically stable.
  std::array<double, kNumModes> sx{}, sy{};
  std::array<std::size_t, kNumModes> n{};
  for (auto i : rows) {
    const auto m = static_cast<std::size_t>(mode_index(records[i].mode));
    sx[m] += records[i].gc_dist_mi;
    sy[m] += records[i].routed_dist_mi;
    ++n[m];
  }
  std::array<double, kNumModes> sxx{}, sxy{};
  for (auto i : rows) {
    const auto m = static_cast<std::size_t>(mode_index(records[i].mode));
    const double dx = records[i].gc_dist_mi - sx[m] / static_cast<double>(n[m]);
    const double dy = records[i].routed_dist_mi - sy[m] / static_cast<double>(n[m]);
    sxx[m] += dx * dx;
    sxy[m] += dx * dy;
  }
  ImputationModel model;
  for (std::size_t m = 0; m < kNumModes; ++m) {
    auto& fit = model.per_mode[m];
    fit.n_fit = n[m];
    if (n[m] < 2 || !(sxx[m] > 0.0)) {
      fit = LinearFit{0.0, 1.0, n[m], true};
      continue;
    }
    const double mx = sx[m] / static_cast<double>(n[m]);
    const double my = sy[m] / static_cast<double>(n[m]);
    fit.slope = sxy[m] / sxx[m];
    fit.intercept = my - fit.slope * mx;
    fit.fallback = false;
  }
  return model;
}

DerivedDistances derive_distances(const ShipmentRecord& record, const DistanceTable& table,
                                  const ImputationModel& imp) {
  DerivedDistances d;
  for (int m = 0; m < kNumModes; ++m) {
    const auto mode = mode_from_index(m);
    if (auto e = table.find(record.orig_area, record.dest_area, mode)) {
      d.miles(m) = e->median_mi;
      d.imputed(m) = 0.0;
    } else {
      d.miles(m) = imp.impute(mode, record.gc_dist_mi);
      d.imputed(m) = 1.0;
    }
  }
  return d;
}

std::vector<DerivedDistances> derive_training_features_oob(std::span<const ShipmentRecord> train,
                                                           const FoldAssignment& folds) {
  if (folds.folds.size() != train.size()) throw LengthMismatch("fold assignment does not cover training records");
  std::vector<DerivedDistances> out(train.size());
  for (int f = 0; f < folds.k; ++f) {
    const auto outside = folds.non_members(f);
    const auto table = build_distance_table(train, outside);
    const auto imp = fit_imputation(train, outside);
    for (auto i : folds.members(f)) out[i] = derive_distances(train[i], table, imp);
  }
  return out;
}

void write_derived_csv(std::ostream& out, std::span<const ShipmentRecord> records,
                       std::span<const DerivedDistances> derived) {
  if (records.size() != derived.size()) throw LengthMismatch("derived rows do not match records");
  out << "id,M1,M2,M3,M4,M5,I1,I2,I3,I4,I5\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << csv::escape(records[i].id);
    for (int m = 0; m < kNumModes; ++m) out << ',' << csv::format_double(derived[i].miles(m));
    for (int m = 0; m < kNumModes; ++m) out << ',' << static_cast<int>(derived[i].imputed(m));
    out << '\n';
  }
}

std::vector<std::pair<std::string, DerivedDistances>> read_derived_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw ParseError("derived csv: empty");
  const auto c = csv::locate_columns(*header, {"id", "M1", "M2", "M3", "M4", "M5", "I1", "I2", "I3", "I4", "I5"});
  std::vector<std::pair<std::string, DerivedDistances>> out;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() != header->size()) throw ParseError("derived csv: bad row");
    DerivedDistances d;
    for (int m = 0; m < kNumModes; ++m) {
      auto miles = csv::parse_double((*row)[c[static_cast<std::size_t>(1 + m)]]);
      auto flag = csv::parse_double((*row)[c[static_cast<std::size_t>(6 + m)]]);
      if (!miles || !flag) throw ParseError("derived csv: bad number");
      d.miles(m) = *miles;
      d.imputed(m) = *flag;
    }
    out.emplace_back((*row)[c[0]], d);
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, bool with_derived)
    : features_(std::move(features)), with_derived_(with_derived) {}

FeatureSchema FeatureSchema::build(const SchemaOptions& options, int n_sctg_groups,
                                   std::vector<std::string> sctg_vocab, std::vector<std::string> naics_vocab) {
  std::vector<FeatureSpec> f;
  auto numeric = [&](std::string name) { f.push_back({name, FeatureKind::Numeric, name, ""}); };
  auto onehot = [&](std::string_view block, const std::string& level) {
    f.push_back({std::string(block) + "=" + level, FeatureKind::OneHot, std::string(block), level});
  };
  numeric("sw");
  numeric("sv");
  numeric("v2w");
  numeric("gc_dist");
  if (options.with_derived) {
    for (int m = 1; m <= kNumModes; ++m) {
      f.push_back({"M" + std::to_string(m), FeatureKind::Numeric, std::string(block::kDerivedMiles), ""});
    }
    for (int m = 1; m <= kNumModes; ++m) {
      f.push_back({"I" + std::to_string(m), FeatureKind::Flag, std::string(block::kDerivedFlags), ""});
    }
  }
  for (int g = 1; g <= n_sctg_groups; ++g) onehot("sctg_n", std::to_string(g));
  for (const char* t : {"C", "M", "R"}) onehot("orig_type", t);
  for (const char* t : {"C", "M", "R"}) onehot("dest_type", t);
  for (auto h : {Hazmat::Class3, Hazmat::OtherHaz, Hazmat::NotHaz}) onehot("haz", std::string(hazmat_name(h)));
  f.push_back({"temp_cntl", FeatureKind::Flag, "temp_cntl", ""});
  if (options.include_export) f.push_back({"export", FeatureKind::Flag, "export", ""});
  if (options.include_sctg) {
    std::sort(sctg_vocab.begin(), sctg_vocab.end());
    for (const auto& code : sctg_vocab) onehot(block::kSctg, code);
  }
  if (options.include_naics) {
    std::sort(naics_vocab.begin(), naics_vocab.end());
    for (const auto& code : naics_vocab) onehot(block::kNaics, code);
  }
  return FeatureSchema(std::move(f), options.with_derived);
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

Eigen::Index FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return static_cast<Eigen::Index>(i);
  }
  throw UnknownFeature("unknown feature '" + std::string(name) + "'");
}

bool FeatureSchema::contains(std::string_view name) const {
  return std::any_of(features_.begin(), features_.end(), [&](const auto& f) { return f.name == name; });
}

std::vector<Eigen::Index> FeatureSchema::columns_without(std::initializer_list<std::string_view> excluded) const {
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const bool drop = std::any_of(excluded.begin(), excluded.end(),
                                  [&](std::string_view b) { return features_[i].block == b; });
    if (!drop) cols.push_back(static_cast<Eigen::Index>(i));
  }
  return cols;
}

FeatureSchema FeatureSchema::subset(std::span<const Eigen::Index> columns) const {
  std::vector<FeatureSpec> f;
  bool derived = false;
  for (auto c : columns) {
    f.push_back(features_.at(static_cast<std::size_t>(c)));
    derived = derived || f.back().block == block::kDerivedMiles;
  }
  return FeatureSchema(std::move(f), derived);
}

namespace {

std::string_view kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Numeric: return "numeric";
    case FeatureKind::OneHot: return "onehot";
    case FeatureKind::Flag: return "flag";
  }
  return "?";
}

FeatureKind kind_from_name(const std::string& s) {
  if (s == "numeric") return FeatureKind::Numeric;
  if (s == "onehot") return FeatureKind::OneHot;
  if (s == "flag") return FeatureKind::Flag;
  throw ParseError("unknown feature kind '" + s + "'");
}

}  // namespace

nlohmann::json FeatureSchema::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& f : features_) {
    arr.push_back({{"name", f.name}, {"kind", kind_name(f.kind)}, {"block", f.block}, {"level", f.level}});
  }
  return {{"with_derived", with_derived_}, {"features", arr}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  std::vector<FeatureSpec> f;
  for (const auto& e : j.at("features")) {
    f.push_back({e.at("name").get<std::string>(), kind_from_name(e.at("kind").get<std::string>()),
                 e.at("block").get<std::string>(), e.at("level").get<std::string>()});
  }
  return FeatureSchema(std::move(f), j.at("with_derived").get<bool>());
}

Eigen::RowVectorXd assemble_features(const ShipmentRecord& r, const DerivedDistances& derived,
                                     const FeatureSchema& schema, const AreaTypeLookup& areas) {
  if (!(r.weight_lb > 0.0)) throw NonpositiveWeight("record " + r.id + " has nonpositive weight");
  const std::string sctg_n = std::to_string(r.sctg_group);
  const std::string orig_type(1, area_type_char(areas.type_of(r.orig_area)));
  const std::string dest_type(1, area_type_char(areas.type_of(r.dest_area)));
  const std::string haz(hazmat_name(r.hazmat));

  Eigen::RowVectorXd x(schema.size());
  Eigen::Index i = 0;
  for (const auto& f : schema.features()) {
    double v = 0.0;
    if (f.kind == FeatureKind::OneHot) {
      const std::string* actual = nullptr;
      if (f.block == "sctg_n") actual = &sctg_n;
      else if (f.block == "orig_type") actual = &orig_type;
      else if (f.block == "dest_type") actual = &dest_type;
      else if (f.block == "haz") actual = &haz;
      else if (f.block == block::kSctg) actual = &r.sctg;
      else if (f.block == block::kNaics) actual = &r.naics;
      else throw SchemaMismatch("unknown one-hot block '" + f.block + "'");
      v = (*actual == f.level) ? 1.0 : 0.0;
    } else if (f.name == "sw") {
      v = r.weight_lb;
    } else if (f.name == "sv") {
      v = r.value_usd;
    } else if (f.name == "v2w") {
      v = r.value_usd / r.weight_lb;
    } else if (f.name == "gc_dist") {
      v = r.gc_dist_mi;
    } else if (f.block == block::kDerivedMiles) {
      v = derived.miles(std::stoi(f.name.substr(1)) - 1);
    } else if (f.block == block::kDerivedFlags) {
      v = derived.imputed(std::stoi(f.name.substr(1)) - 1);
    } else if (f.name == "temp_cntl") {
      v = r.temp_controlled ? 1.0 : 0.0;
    } else if (f.name == "export") {
      v = r.export_flag ? 1.0 : 0.0;
    } else {
      throw SchemaMismatch("unknown feature '" + f.name + "'");
    }
    x(i++) = v;
  }
  return x;
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> rows) const {
  FeatureTable t;
  t.schema = schema;
  t.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    t.X.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(i));
    t.y.push_back(y[i]);
    t.ids.push_back(ids[i]);
    t.sctg.push_back(sctg[i]);
    t.naics.push_back(naics[i]);
  }
  return t;
}

FeatureTable build_feature_table(std::span<const ShipmentRecord> records, std::span<const DerivedDistances> derived,
                                 const FeatureSchema& schema, const AreaTypeLookup& areas) {
  if (records.size() != derived.size()) throw LengthMismatch("derived rows do not match records");
  FeatureTable t;
  t.schema = schema;
  t.X.resize(static_cast<Eigen::Index>(records.size()), schema.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    t.X.row(static_cast<Eigen::Index>(i)) = assemble_features(records[i], derived[i], schema, areas);
    t.y.push_back(mode_index(records[i].mode));
    t.ids.push_back(records[i].id);
    t.sctg.push_back(records[i].sctg);
    t.naics.push_back(records[i].naics);
  }
  return t;
}

std::vector<std::string> sctg_vocabulary(std::span<const ShipmentRecord> records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.sctg);
  return {s.begin(), s.end()};
}

std::vector<std::string> naics_vocabulary(std::span<const ShipmentRecord> records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.naics);
  return {s.begin(), s.end()};
}

}  // namespace fmc
