#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fmc/core.hpp"

namespace fmc {

enum class Partition : std::uint8_t { Train, Test };

/// Train/test tag per record, aligned with the input order.
struct SplitAssignment {
  std::vector<std::string> ids;
  std::vector<Partition> tags;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  std::vector<std::size_t> indices(Partition p) const;
  bool operator==(const SplitAssignment&) const = default;
};

/// Fold index per record, aligned with the input order.
struct FoldAssignment {
  std::vector<std::string> ids;
  std::vector<int> folds;
  int k = 0;

  std::vector<std::size_t> members(int fold) const;
  bool operator==(const FoldAssignment&) const = default;
  std::vector<std::size_t> non_members(int fold) const;
};

/// Stratum key used for both splitting and fold assignment: (sctg, naics).
std::string stratum_key(const ShipmentRecord& r);

/// Per stratum of n records, round-half-up(n * test_fraction) go to Test,
/// clamped to [0, n-1]; singleton strata stay in Train.
SplitAssignment stratified_split(std::span<const ShipmentRecord> records, double test_fraction, std::uint64_t seed);

/// Shuffles each stratum and deals its members round-robin over k folds.
/// The dealing cursor carries over between strata.
FoldAssignment stratified_kfold(std::span<const ShipmentRecord> records, int k, std::uint64_t seed);

/// Two-column CSV (id,tag) audit exports.
void write_split_csv(std::ostream& out, const SplitAssignment& split);
void write_folds_csv(std::ostream& out, const FoldAssignment& folds);
SplitAssignment read_split_csv(std::istream& in);
FoldAssignment read_folds_csv(std::istream& in);

}  // namespace fmc
