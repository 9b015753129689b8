#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmc/core.hpp"

namespace fmc {

/// Knobs of the synthetic shipment generator. The concrete world (area
/// placement, per-pair circuity, category utility weights) is drawn from
/// `seed` by make_world.
struct SynthConfig {
  std::size_t n_records = 50000;
  int n_areas = 8;
  int n_sctg = 10;
  int n_naics = 10;
  double plane_miles = 1800;   ///< side of the square the area centers fall in
  double area_radius = 350;    ///< shipment endpoints scatter within this radius
  double private_cap = 500;    ///< PrivateTruck unavailable beyond this gc distance
  double air_min = 150;        ///< Air needs gc above this and no rural end
  double other_pair_share = 0.4;  ///< fraction of OD pairs where Other is available
  double air_pair_share = 0.5;    ///< fraction of non-rural OD pairs with air service
  double circuity_min = 1.0;
  double circuity_max = 3.0;
  double circuity_weight = 16.0;  ///< utility penalty per unit log-circuity
  double routed_noise = 0.05;     ///< sd of log routed-distance noise
  double shared_slope_scale = 1.0;  ///< multiplier on the category-independent slopes
  double sctg_constant_sd = 1.0;  ///< sd of SCTG-specific mode constants
  double sctg_slope_sd = 2.0;     ///< sd of SCTG-specific slopes on weight, v2w, distance
  double naics_constant_sd = 1.0;
  double naics_slope_sd = 2.0;
  std::array<double, kNumModes> target_shares = {0.40, 0.25, 0.25, 0.03, 0.07};
  std::uint64_t seed = 7;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Utility weights of one category for each mode.
struct CategoryWeights {
  std::string code;
  ModeRow<double> constant = ModeRow<double>::Zero();
  ModeRow<double> log_weight = ModeRow<double>::Zero();
  ModeRow<double> log_v2w = ModeRow<double>::Zero();
  ModeRow<double> log_distance = ModeRow<double>::Zero();
  double mean_log_weight = 0.0;
  double mean_log_v2w = 0.0;
};

struct SynthArea {
  std::string code;
  AreaType type = AreaType::C;
  double x = 0.0;
  double y = 0.0;
  double mass = 1.0;  ///< relative shipment origin/destination volume
};

/// Materialized scenario.
struct SynthWorld {
  SynthConfig config;
  std::vector<SynthArea> areas;
  /// [orig][dest] per-mode circuity (routed / great-circle).
  std::vector<std::vector<ModeRow<double>>> circuity;
  /// [orig][dest] whether Other / Air service exists on the pair.
  std::vector<std::vector<bool>> other_available;
  std::vector<std::vector<bool>> air_service;
  ModeRow<double> constant = ModeRow<double>::Zero();  ///< calibrated alternative-specific constants
  ModeRow<double> log_weight = ModeRow<double>::Zero();
  ModeRow<double> log_v2w = ModeRow<double>::Zero();
  ModeRow<double> log_distance = ModeRow<double>::Zero();
  ModeRow<double> hazmat = ModeRow<double>::Zero();
  ModeRow<double> temp = ModeRow<double>::Zero();
  std::vector<CategoryWeights> sctg;
  std::vector<CategoryWeights> naics;

  AreaTypeLookup area_lookup() const;
  nlohmann::json to_json() const;
};

/// Draws the world and calibrates mode constants toward target_shares.
SynthWorld make_world(const SynthConfig& config);

/// Generating-process probabilities and the Bayes label for one record.
struct TruthRow {
  std::string id;
  ProbVector p = ProbVector::Zero();
  ModeLabel bayes = ModeLabel::ForHireTruck;
};

struct SynthData {
  std::vector<ShipmentRecord> records;
  std::vector<TruthRow> truth;
};

/// Records in id order; chunks use derived seeds so output does not depend
/// on `threads`.
SynthData generate(const SynthWorld& world, int threads = 1);
SynthData generate(const SynthConfig& config, int threads = 1);

/// Mode probabilities the generator uses for a record (areas looked up by
/// code; throws UnknownArea / UnknownCategory for codes outside the world).
ProbVector true_probabilities(const SynthWorld& world, const ShipmentRecord& record);

/// Fraction of records whose label equals the truth argmax.
double bayes_accuracy(std::span<const ShipmentRecord> records, std::span<const TruthRow> truth);
/// Mean of the per-record largest true probability.
double expected_bayes_accuracy(std::span<const TruthRow> truth);

/// Sidecar CSV: id,p1..p5,bayes_label.
void write_truth_csv(std::ostream& out, std::span<const TruthRow> truth);
std::vector<TruthRow> read_truth_csv(std::istream& in);

}  // namespace fmc
