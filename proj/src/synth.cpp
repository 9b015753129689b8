#include "fmc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fmc/csv.hpp"
#include "fmc/parallel.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

constexpr std::size_t kChunk = 4096;
constexpr std::size_t kPilot = 20000;
constexpr int kCalibrationRounds = 40;
constexpr double kWeightCenter = 5.5;  // log lb
constexpr double kWeightSpread = 2.0;
constexpr double kV2wCenter = 1.5;     // log $/lb
constexpr double kV2wSpread = 1.2;

const std::vector<std::string> kNaicsCodes = {"311", "312", "322", "325", "331", "332", "333",
                                              "423", "424", "4541", "4244", "454", "5111", "551114"};

ModeRow<double> row(double a, double b, double c, double d, double e) {
  ModeRow<double> r;
  r << a, b, c, d, e;
  return r;
}

ModeRow<double> normal_row(Rng& rng, double sd) {
  ModeRow<double> r;
  for (int m = 0; m < kNumModes; ++m) r(m) = sd * rng.normal();
  return r;
}

std::vector<std::string> sctg_codes(int n) {
  const auto groups = SctgGroupMap::default_map();
  const auto& table = groups.table();
  std::vector<std::string> all;
  for (const auto& [code, group] : table) all.push_back(code);
  if (n < 1 || n > static_cast<int>(all.size())) throw ConfigError("n_sctg must be in [1, " + std::to_string(all.size()) + "]");
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(all[static_cast<std::size_t>(i) * (all.size() - 1) / static_cast<std::size_t>(std::max(1, n - 1))]);
  }
  return out;
}

void validate(const SynthConfig& c) {
  if (c.n_records < 1) throw ConfigError("n_records must be positive");
  if (c.n_areas < 2) throw ConfigError("n_areas must be at least 2");
  if (c.n_naics < 1 || c.n_naics > static_cast<int>(kNaicsCodes.size())) {
    throw ConfigError("n_naics must be in [1, " + std::to_string(kNaicsCodes.size()) + "]");
  }
  if (!(c.private_cap > 0)) throw ConfigError("private_cap must be positive");
  if (!(c.circuity_min >= 1.0 && c.circuity_max >= c.circuity_min)) throw ConfigError("circuity range must start at 1 or above");
  if (!(c.area_radius > 0 && c.plane_miles > 0)) throw ConfigError("geometry must be positive");
  if (!(c.other_pair_share >= 0 && c.other_pair_share <= 1)) throw ConfigError("other_pair_share must be in [0, 1]");
  if (!(c.air_pair_share > 0 && c.air_pair_share <= 1)) throw ConfigError("air_pair_share must be in (0, 1]");
  for (double s : c.target_shares) {
    if (!(s > 0)) throw ConfigError("target shares must be positive");
  }
}

/// A shipment before its mode is drawn, with the world indices it came from.
struct Draft {
  ShipmentRecord record;
  std::size_t orig = 0;
  std::size_t dest = 0;
  std::size_t sctg = 0;
  std::size_t naics = 0;
};

std::size_t pick(Rng& rng, const std::vector<double>& weights) {
  double total = 0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0) return i;
  }
  return weights.size() - 1;
}

std::string record_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08zu", i + 1);
  return buf;
}

Draft draft(const SynthWorld& w, Rng& rng, std::size_t index) {
  const auto& c = w.config;
  Draft d;
  std::vector<double> mass;
  for (const auto& a : w.areas) mass.push_back(a.mass);
  d.orig = pick(rng, mass);
  std::vector<double> pull(w.areas.size());
  for (std::size_t j = 0; j < w.areas.size(); ++j) {
    const double dist = std::hypot(w.areas[j].x - w.areas[d.orig].x, w.areas[j].y - w.areas[d.orig].y);
    pull[j] = w.areas[j].mass * std::exp(-dist / 900.0) * (j == d.orig ? 0.6 : 1.0);
  }
  d.dest = pick(rng, pull);
  auto endpoint = [&](const SynthArea& a) {
    const double r = c.area_radius * std::sqrt(rng.uniform());
    const double t = 2 * M_PI * rng.uniform();
    return std::pair{a.x + r * std::cos(t), a.y + r * std::sin(t)};
  };
  const auto [ox, oy] = endpoint(w.areas[d.orig]);
  const auto [dx, dy] = endpoint(w.areas[d.dest]);
  d.sctg = static_cast<std::size_t>(rng.below(w.sctg.size()));
  d.naics = static_cast<std::size_t>(rng.below(w.naics.size()));
  const auto& s = w.sctg[d.sctg];

  auto& r = d.record;
  r.id = record_id(index);
  r.orig_area = w.areas[d.orig].code;
  r.dest_area = w.areas[d.dest].code;
  r.sctg = s.code;
  static const auto kGroups = SctgGroupMap::default_map();
  r.sctg_group = kGroups.group_of(s.code);
  r.naics = w.naics[d.naics].code;
  r.gc_dist_mi = std::max(1.0, std::round(std::hypot(dx - ox, dy - oy)));
  r.weight_lb = std::max(1.0, std::round(std::exp(s.mean_log_weight + 1.6 * rng.normal())));
  r.value_usd = std::max(1.0, std::round(r.weight_lb * std::exp(s.mean_log_v2w + 1.0 * rng.normal())));
  const double hz = rng.uniform();
  r.hazmat = hz < 0.04 ? Hazmat::Class3 : hz < 0.08 ? Hazmat::OtherHaz : Hazmat::NotHaz;
  r.temp_controlled = rng.uniform() < 0.08;
  r.export_flag = rng.uniform() < 0.04;
  return d;
}

ProbVector probabilities(const SynthWorld& w, const Draft& d) {
  const auto& c = w.config;
  const auto& r = d.record;
  const auto& s = w.sctg[d.sctg];
  const auto& k = w.naics[d.naics];
  const double zw = (std::log(r.weight_lb) - kWeightCenter) / kWeightSpread;
  const double zv = (std::log(r.value_usd / r.weight_lb) - kV2wCenter) / kV2wSpread;
  const double zd = std::log(r.gc_dist_mi / 100.0);
  ModeRow<double> u = w.constant + s.constant + k.constant;
  u += zw * (w.log_weight + s.log_weight + k.log_weight);
  u += zv * (w.log_v2w + s.log_v2w + k.log_v2w);
  u += zd * (w.log_distance + s.log_distance + k.log_distance);
  u -= c.circuity_weight * w.circuity[d.orig][d.dest].array().log().matrix();
  if (r.hazmat != Hazmat::NotHaz) u += w.hazmat;
  if (r.temp_controlled) u += w.temp;

  std::array<bool, kNumModes> available;
  available.fill(true);
  available[mode_index(ModeLabel::PrivateTruck)] = r.gc_dist_mi <= c.private_cap;
  available[mode_index(ModeLabel::Air)] = r.gc_dist_mi > c.air_min && w.areas[d.orig].type != AreaType::R &&
                                          w.areas[d.dest].type != AreaType::R && w.air_service[d.orig][d.dest];
  available[mode_index(ModeLabel::Other)] = w.other_available[d.orig][d.dest];

  double top = -INFINITY;
  for (int m = 0; m < kNumModes; ++m) {
    if (available[static_cast<std::size_t>(m)]) top = std::max(top, u(m));
  }
  ProbVector p = ProbVector::Zero();
  for (int m = 0; m < kNumModes; ++m) {
    if (available[static_cast<std::size_t>(m)]) p(m) = std::exp(u(m) - top);
  }
  return p / p.sum();
}

void realize(const SynthWorld& w, Rng& rng, Draft& d, TruthRow& truth) {
  truth.id = d.record.id;
  truth.p = probabilities(w, d);
  truth.bayes = mode_from_index(argmax(truth.p));
  double u = rng.uniform();
  int m = 0;
  for (; m < kNumModes - 1; ++m) {
    u -= truth.p(m);
    if (u < 0 && truth.p(m) > 0) break;
  }
  while (truth.p(m) == 0) --m;  // rounding tail lands on the last offered mode
  d.record.mode = mode_from_index(m);
  const double routed = w.circuity[d.orig][d.dest](m) * d.record.gc_dist_mi * std::exp(w.config.routed_noise * rng.normal());
  d.record.routed_dist_mi = std::max(1.0, std::round(routed));
}

nlohmann::json row_json(const ModeRow<double>& r) { return std::vector<double>(r.data(), r.data() + kNumModes); }

}  // namespace

nlohmann::json SynthConfig::to_json() const {
  return {{"n_records", n_records},
          {"n_areas", n_areas},
          {"n_sctg", n_sctg},
          {"n_naics", n_naics},
          {"plane_miles", plane_miles},
          {"area_radius", area_radius},
          {"private_cap", private_cap},
          {"air_min", air_min},
          {"other_pair_share", other_pair_share},
          {"air_pair_share", air_pair_share},
          {"circuity_min", circuity_min},
          {"circuity_max", circuity_max},
          {"circuity_weight", circuity_weight},
          {"routed_noise", routed_noise},
          {"shared_slope_scale", shared_slope_scale},
          {"sctg_constant_sd", sctg_constant_sd},
          {"sctg_slope_sd", sctg_slope_sd},
          {"naics_constant_sd", naics_constant_sd},
          {"naics_slope_sd", naics_slope_sd},
          {"target_shares", target_shares},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n_records = j.value("n_records", c.n_records);
    c.n_areas = j.value("n_areas", c.n_areas);
    c.n_sctg = j.value("n_sctg", c.n_sctg);
    c.n_naics = j.value("n_naics", c.n_naics);
    c.plane_miles = j.value("plane_miles", c.plane_miles);
    c.area_radius = j.value("area_radius", c.area_radius);
    c.private_cap = j.value("private_cap", c.private_cap);
    c.air_min = j.value("air_min", c.air_min);
    c.other_pair_share = j.value("other_pair_share", c.other_pair_share);
    c.air_pair_share = j.value("air_pair_share", c.air_pair_share);
    c.circuity_min = j.value("circuity_min", c.circuity_min);
    c.circuity_max = j.value("circuity_max", c.circuity_max);
    c.circuity_weight = j.value("circuity_weight", c.circuity_weight);
    c.routed_noise = j.value("routed_noise", c.routed_noise);
    c.shared_slope_scale = j.value("shared_slope_scale", c.shared_slope_scale);
    c.sctg_constant_sd = j.value("sctg_constant_sd", c.sctg_constant_sd);
    c.sctg_slope_sd = j.value("sctg_slope_sd", c.sctg_slope_sd);
    c.naics_constant_sd = j.value("naics_constant_sd", c.naics_constant_sd);
    c.naics_slope_sd = j.value("naics_slope_sd", c.naics_slope_sd);
    c.target_shares = j.value("target_shares", c.target_shares);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synth config: ") + e.what());
  }
  validate(c);
  return c;
}

AreaTypeLookup SynthWorld::area_lookup() const {
  std::map<std::string, AreaType, std::less<>> table;
  for (const auto& a : areas) table.emplace(a.code, a.type);
  return AreaTypeLookup(std::move(table));
}

nlohmann::json SynthWorld::to_json() const {
  nlohmann::json areas_j = nlohmann::json::array();
  for (const auto& a : areas) {
    areas_j.push_back({{"code", a.code}, {"type", std::string(1, area_type_char(a.type))}, {"x", a.x}, {"y", a.y}, {"mass", a.mass}});
  }
  auto cats = [](const std::vector<CategoryWeights>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : v) {
      out.push_back({{"code", c.code},
                     {"constant", row_json(c.constant)},
                     {"log_weight", row_json(c.log_weight)},
                     {"log_v2w", row_json(c.log_v2w)},
                     {"log_distance", row_json(c.log_distance)},
                     {"mean_log_weight", c.mean_log_weight},
                     {"mean_log_v2w", c.mean_log_v2w}});
    }
    return out;
  };
  nlohmann::json circ = nlohmann::json::array();
  for (std::size_t o = 0; o < areas.size(); ++o) {
    for (std::size_t d = 0; d < areas.size(); ++d) {
      circ.push_back({{"orig", areas[o].code},
                      {"dest", areas[d].code},
                      {"circuity", row_json(circuity[o][d])},
                      {"other_available", static_cast<bool>(other_available[o][d])},
                      {"air_service", static_cast<bool>(air_service[o][d])}});
    }
  }
  return {{"config", config.to_json()},
          {"areas", std::move(areas_j)},
          {"pairs", std::move(circ)},
          {"constant", row_json(constant)},
          {"log_weight", row_json(log_weight)},
          {"log_v2w", row_json(log_v2w)},
          {"log_distance", row_json(log_distance)},
          {"hazmat", row_json(hazmat)},
          {"temp", row_json(temp)},
          {"sctg", cats(sctg)},
          {"naics", cats(naics)}};
}

SynthWorld make_world(const SynthConfig& config) {
  validate(config);
  SynthWorld w;
  w.config = config;
  Rng rng(derive_seed(config.seed, "synth/world"));

  const auto n = static_cast<std::size_t>(config.n_areas);
  for (std::size_t i = 0; i < n; ++i) {
    SynthArea a;
    char code[24];
    std::snprintf(code, sizeof(code), "A%02zu", i + 1);
    a.code = code;
    // Roughly 3/8 combined, 3/8 metro, the rest rural remainders.
    a.type = i * 8 < n * 3 ? AreaType::C : i * 8 < n * 6 ? AreaType::M : AreaType::R;
    a.mass = a.type == AreaType::C ? 3.0 : a.type == AreaType::M ? 1.5 : 0.7;
    // Keep centers apart so pairs differ in distance.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      a.x = rng.uniform(0, config.plane_miles);
      a.y = rng.uniform(0, config.plane_miles);
      const bool clear = std::all_of(w.areas.begin(), w.areas.end(), [&](const SynthArea& b) {
        return std::hypot(a.x - b.x, a.y - b.y) > 2.2 * config.area_radius;
      });
      if (clear) break;
    }
    w.areas.push_back(std::move(a));
  }
  w.circuity.assign(n, std::vector<ModeRow<double>>(n));
  w.other_available.assign(n, std::vector<bool>(n));
  w.air_service.assign(n, std::vector<bool>(n));
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t d = 0; d < n; ++d) {
      for (int m = 0; m < kNumModes; ++m) w.circuity[o][d](m) = rng.uniform(config.circuity_min, config.circuity_max);
      w.other_available[o][d] = rng.uniform() < config.other_pair_share;
      w.air_service[o][d] = rng.uniform() < config.air_pair_share;
    }
  }

  //                  ForHire Private Parcel  Air   Other
  w.log_weight = config.shared_slope_scale * row(0.8, 0.3, -2.0, -0.8, 1.4);
  w.log_v2w = config.shared_slope_scale * row(0.0, -0.3, 0.5, 1.5, -0.8);
  w.log_distance = config.shared_slope_scale * row(0.4, -0.8, 0.2, 1.2, 0.3);
  w.hazmat = row(0.5, 0.3, -2.5, -2.0, 0.8);
  w.temp = row(0.6, 0.4, -0.5, 0.2, -0.5);

  auto categories = [&](const std::vector<std::string>& codes, double constant_sd, double slope_sd, bool shapes_goods) {
    std::vector<CategoryWeights> out;
    for (const auto& code : codes) {
      CategoryWeights c;
      c.code = code;
      c.constant = normal_row(rng, constant_sd);
      c.log_weight = normal_row(rng, slope_sd);
      c.log_v2w = normal_row(rng, slope_sd);
      c.log_distance = normal_row(rng, slope_sd);
      // Commodity codes set the physical profile of the goods.
      c.mean_log_weight = shapes_goods ? kWeightCenter + 1.2 * rng.normal() : 0.0;
      c.mean_log_v2w = shapes_goods ? kV2wCenter + 0.8 * rng.normal() : 0.0;
      out.push_back(std::move(c));
    }
    return out;
  };
  w.sctg = categories(sctg_codes(config.n_sctg), config.sctg_constant_sd, config.sctg_slope_sd, true);
  w.naics = categories({kNaicsCodes.begin(), kNaicsCodes.begin() + config.n_naics}, config.naics_constant_sd, config.naics_slope_sd, false);

  // Calibrate mode constants on a pilot sample so expected shares hit the targets.
  Rng pilot_rng(derive_seed(config.seed, "synth/pilot"));
  std::vector<Draft> pilot;
  pilot.reserve(kPilot);
  for (std::size_t i = 0; i < kPilot; ++i) pilot.push_back(draft(w, pilot_rng, i));
  for (int round = 0; round < kCalibrationRounds; ++round) {
    ProbVector share = ProbVector::Zero();
    for (const auto& d : pilot) share += probabilities(w, d);
    share /= static_cast<double>(pilot.size());
    for (int m = 0; m < kNumModes; ++m) {
      w.constant(m) += std::log(config.target_shares[static_cast<std::size_t>(m)] / std::max(share(m), 1e-9));
    }
    w.constant.array() -= w.constant(0);
  }
  return w;
}

SynthData generate(const SynthWorld& world, int threads) {
  const std::size_t n = world.config.n_records;
  SynthData out;
  out.records.resize(n);
  out.truth.resize(n);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng(derive_seed(world.config.seed, "synth/chunk", c));
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      auto d = draft(world, rng, i);
      realize(world, rng, d, out.truth[i]);
      out.records[i] = std::move(d.record);
    }
  });
  return out;
}

SynthData generate(const SynthConfig& config, int threads) { return generate(make_world(config), threads); }

ProbVector true_probabilities(const SynthWorld& world, const ShipmentRecord& record) {
  auto find = [](const auto& items, const std::string& code, auto error) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].code == code) return i;
    }
    throw decltype(error)("code '" + code + "' is not part of the synthetic world");
  };
  Draft d;
  d.record = record;
  d.orig = find(world.areas, record.orig_area, UnknownArea(""));
  d.dest = find(world.areas, record.dest_area, UnknownArea(""));
  d.sctg = find(world.sctg, record.sctg, UnknownCategory(""));
  d.naics = find(world.naics, record.naics, UnknownCategory(""));
  return probabilities(world, d);
}

double bayes_accuracy(std::span<const ShipmentRecord> records, std::span<const TruthRow> truth) {
  if (records.size() != truth.size()) throw LengthMismatch("one truth row per record");
  if (records.empty()) throw EmptyDataset("no records");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < records.size(); ++i) hit += records[i].mode == truth[i].bayes;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

double expected_bayes_accuracy(std::span<const TruthRow> truth) {
  if (truth.empty()) throw EmptyDataset("no truth rows");
  double sum = 0;
  for (const auto& t : truth) sum += t.p.maxCoeff();
  return sum / static_cast<double>(truth.size());
}

void write_truth_csv(std::ostream& out, std::span<const TruthRow> truth) {
  out << "id,p1,p2,p3,p4,p5,bayes_label\n";
  for (const auto& t : truth) {
    out << csv::escape(t.id);
    for (int m = 0; m < kNumModes; ++m) out << ',' << csv::format_double(t.p(m));
    out << ',' << mode_ordinal(t.bayes) << '\n';
  }
}

std::vector<TruthRow> read_truth_csv(std::istream& in) {
  const auto header = csv::read_record(in);
  if (!header) throw ParseError("empty truth CSV");
  const auto cols = csv::locate_columns(*header, {"id", "p1", "p2", "p3", "p4", "p5", "bayes_label"});
  std::vector<TruthRow> out;
  while (auto rec = csv::read_record(in)) {
    if (rec->size() != header->size()) throw ParseError("ragged truth CSV row");
    TruthRow t;
    t.id = (*rec)[cols[0]];
    for (int m = 0; m < kNumModes; ++m) {
      const auto v = csv::parse_double((*rec)[cols[static_cast<std::size_t>(m + 1)]]);
      if (!v) throw ParseError("bad probability in truth CSV");
      t.p(m) = *v;
    }
    const auto label = csv::parse_double((*rec)[cols[6]]);
    if (!label || *label < 1 || *label > kNumModes || *label != std::floor(*label)) throw ParseError("bad bayes_label");
    t.bayes = mode_from_index(static_cast<int>(*label) - 1);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace fmc
