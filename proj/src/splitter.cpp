#include "fmc/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fmc/csv.hpp"
#include "fmc/rng.hpp"

namespace fmc {
namespace {

std::map<std::string, std::vector<std::size_t>> group_strata(std::span<const ShipmentRecord> records) {
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) strata[stratum_key(records[i])].push_back(i);
  return strata;
}

std::vector<std::string> collect_ids(std::span<const ShipmentRecord> records) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return ids;
}

}  // namespace

std::string stratum_key(const ShipmentRecord& r) { return r.sctg + '|' + r.naics; }

std::vector<std::size_t> SplitAssignment::indices(Partition p) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == p) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::non_members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] != fold) out.push_back(i);
  }
  return out;
}

SplitAssignment stratified_split(std::span<const ShipmentRecord> records, double test_fraction, std::uint64_t seed) {
  if (records.empty()) throw EmptyDataset("stratified_split: no records");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0,1)");

  SplitAssignment split;
  split.ids = collect_ids(records);
  split.tags.assign(records.size(), Partition::Train);
  split.seed = seed;
  split.test_fraction = test_fraction;

  for (auto& [key, members] : group_strata(records)) {
    const auto n = static_cast<long>(members.size());
    if (n < 2) continue;
    long n_test = static_cast<long>(std::floor(static_cast<double>(n) * test_fraction + 0.5));
    n_test = std::clamp(n_test, 0L, n - 1);
    Rng rng(derive_seed(seed, "split/" + key));
    rng.shuffle(members);
    for (long i = 0; i < n_test; ++i) split.tags[members[static_cast<std::size_t>(i)]] = Partition::Test;
  }
  return split;
}

FoldAssignment stratified_kfold(std::span<const ShipmentRecord> records, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (static_cast<std::size_t>(k) > records.size()) {
    throw TooFewRecords("k=" + std::to_string(k) + " exceeds " + std::to_string(records.size()) + " records");
  }
  FoldAssignment out;
  out.ids = collect_ids(records);
  out.folds.assign(records.size(), 0);
  out.k = k;
  int cursor = 0;
  for (auto& [key, members] : group_strata(records)) {
    Rng rng(derive_seed(seed, "kfold/" + key));
    rng.shuffle(members);
    for (auto i : members) {
      out.folds[i] = cursor;
      cursor = (cursor + 1) % k;
    }
  }
  return out;
}

void write_split_csv(std::ostream& out, const SplitAssignment& split) {
  out << "id,tag\n";
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    out << csv::escape(split.ids[i]) << ',' << (split.tags[i] == Partition::Train ? "train" : "test") << '\n';
  }
}

void write_folds_csv(std::ostream& out, const FoldAssignment& folds) {
  out << "id,fold\n";
  for (std::size_t i = 0; i < folds.ids.size(); ++i) out << csv::escape(folds.ids[i]) << ',' << folds.folds[i] << '\n';
}

SplitAssignment read_split_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw ParseError("split csv: empty");
  const auto cols = csv::locate_columns(*header, {"id", "tag"});
  SplitAssignment split;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() != header->size()) throw ParseError("split csv: bad row");
    split.ids.push_back((*row)[cols[0]]);
    const auto& tag = (*row)[cols[1]];
    if (tag == "train") {
      split.tags.push_back(Partition::Train);
    } else if (tag == "test") {
      split.tags.push_back(Partition::Test);
    } else {
      throw ParseError("split csv: bad tag '" + tag + "'");
    }
  }
  return split;
}

FoldAssignment read_folds_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw ParseError("fold csv: empty");
  const auto cols = csv::locate_columns(*header, {"id", "fold"});
  FoldAssignment folds;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() != header->size()) throw ParseError("fold csv: bad row");
    folds.ids.push_back((*row)[cols[0]]);
    const auto f = csv::parse_double((*row)[cols[1]]);
    if (!f || *f < 0) throw ParseError("fold csv: bad fold");
    folds.folds.push_back(static_cast<int>(*f));
    folds.k = std::max(folds.k, folds.folds.back() + 1);
  }
  return folds;
}

}  // namespace fmc
