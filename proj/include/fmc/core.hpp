#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fmc/error.hpp"

namespace fmc {

inline constexpr int kNumModes = 5;

/// Aggregated freight mode. The ordinal (1..5) is what gets serialized.
enum class ModeLabel : std::uint8_t {
  ForHireTruck = 1,
  PrivateTruck = 2,
  Parcel = 3,
  Air = 4,
  Other = 5,
};

inline constexpr std::array<ModeLabel, kNumModes> kAllModes = {
    ModeLabel::ForHireTruck, ModeLabel::PrivateTruck, ModeLabel::Parcel,
    ModeLabel::Air, ModeLabel::Other};

/// Zero-based class index used by every learner (ForHireTruck -> 0).
constexpr int mode_index(ModeLabel m) { return static_cast<int>(m) - 1; }
constexpr int mode_ordinal(ModeLabel m) { return static_cast<int>(m); }
ModeLabel mode_from_index(int index);
ModeLabel mode_from_ordinal(int ordinal);
std::string_view mode_name(ModeLabel m);

/// Per-class probability row. Templated on scalar so the same layout serves
/// count accumulators and real-valued distributions.
template <typename Scalar>
using ModeRow = Eigen::Matrix<Scalar, 1, kNumModes>;
using ProbVector = ModeRow<double>;
/// n x 5 probability matrix, one row per record.
using ProbMatrix = Eigen::Matrix<double, Eigen::Dynamic, kNumModes, Eigen::RowMajor>;

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
int argmax(const Eigen::DenseBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

/// Maps a raw CFS PUF mode code onto the five aggregated modes. Codes outside
/// the 14-code table (e.g. "00", "02", "03", "13") are unmatched.
std::optional<ModeLabel> aggregate_mode(std::string_view code);

/// The 14 mappable raw codes, in table order.
const std::vector<std::pair<std::string, ModeLabel>>& mode_code_table();

enum class Hazmat : std::uint8_t { Class3 = 0, OtherHaz = 1, NotHaz = 2 };
inline constexpr int kNumHazmat = 3;
std::string_view hazmat_name(Hazmat h);

enum class AreaType : std::uint8_t { C = 0, M = 1, R = 2 };
inline constexpr int kNumAreaTypes = 3;
char area_type_char(AreaType t);
AreaType area_type_from_char(char c);

/// One accepted PUF row.
struct ShipmentRecord {
  std::string id;
  double weight_lb = 0.0;
  double value_usd = 0.0;
  std::string sctg;
  int sctg_group = 0;
  std::string naics;
  std::string orig_area;
  std::string dest_area;
  double gc_dist_mi = 0.0;
  double routed_dist_mi = 0.0;
  Hazmat hazmat = Hazmat::NotHaz;
  bool temp_controlled = false;
  bool export_flag = false;
  ModeLabel mode = ModeLabel::ForHireTruck;

  bool operator==(const ShipmentRecord&) const = default;
};

/// SCTG two-digit code -> aggregated group (1..9). Loaded from a CSV with
/// header `sctg,group`; the default table groups contiguous SCTG ranges.
class SctgGroupMap {
 public:
  static SctgGroupMap default_map();
  static SctgGroupMap from_csv(std::istream& in);

  explicit SctgGroupMap(std::map<std::string, int, std::less<>> table);

  /// Throws UnknownCategory for codes absent from the table.
  int group_of(std::string_view sctg) const;
  bool contains(std::string_view sctg) const;
  int num_groups() const { return num_groups_; }
  const std::map<std::string, int, std::less<>>& table() const { return table_; }

 private:
  std::map<std::string, int, std::less<>> table_;
  int num_groups_ = 0;
};

/// Free-function form of SctgGroupMap::group_of.
int sctg_to_group(std::string_view sctg, const SctgGroupMap& map);

/// CFS area code -> C/M/R. CSV header `area,type`.
class AreaTypeLookup {
 public:
  AreaTypeLookup() = default;
  explicit AreaTypeLookup(std::map<std::string, AreaType, std::less<>> table);
  static AreaTypeLookup from_csv(std::istream& in);

  /// Throws UnknownArea when the code is missing.
  AreaType type_of(std::string_view area) const;
  const std::map<std::string, AreaType, std::less<>>& table() const { return table_; }
  void write_csv(std::ostream& out) const;

 private:
  std::map<std::string, AreaType, std::less<>> table_;
};

AreaType classify_area(std::string_view area, const AreaTypeLookup& lookup);

}  // namespace fmc
