#include "fmc/core.hpp"

#include <cstdio>
#include <set>

#include "fmc/csv.hpp"

namespace fmc {

ModeLabel mode_from_index(int index) {
  if (index < 0 || index >= kNumModes) throw Error("mode index out of range: " + std::to_string(index));
  return static_cast<ModeLabel>(index + 1);
}

ModeLabel mode_from_ordinal(int ordinal) { return mode_from_index(ordinal - 1); }

std::string_view mode_name(ModeLabel m) {
  switch (m) {
    case ModeLabel::ForHireTruck: return "ForHireTruck";
    case ModeLabel::PrivateTruck: return "PrivateTruck";
    case ModeLabel::Parcel: return "Parcel";
    case ModeLabel::Air: return "Air";
    case ModeLabel::Other: return "Other";
  }
  return "?";
}

const std::vector<std::pair<std::string, ModeLabel>>& mode_code_table() {
  static const std::vector<std::pair<std::string, ModeLabel>> table = {
      {"04", ModeLabel::ForHireTruck},
      {"05", ModeLabel::PrivateTruck},
      {"14", ModeLabel::Parcel},
      {"11", ModeLabel::Air},
      {"06", ModeLabel::Other},   // rail
      {"07", ModeLabel::Other},   // water
      {"08", ModeLabel::Other},   // inland water
      {"09", ModeLabel::Other},   // great lakes
      {"10", ModeLabel::Other},   // deep sea
      {"101", ModeLabel::Other},  // multiple waterways
      {"12", ModeLabel::Other},   // pipeline
      {"15", ModeLabel::Other},   // truck and rail
      {"16", ModeLabel::Other},   // truck and water
      {"17", ModeLabel::Other},   // rail and water
  };
  return table;
}

std::optional<ModeLabel> aggregate_mode(std::string_view code) {
  for (const auto& [raw, mode] : mode_code_table()) {
    if (raw == code) return mode;
  }
  return std::nullopt;
}

std::string_view hazmat_name(Hazmat h) {
  switch (h) {
    case Hazmat::Class3: return "Class3";
    case Hazmat::OtherHaz: return "OtherHaz";
    case Hazmat::NotHaz: return "NotHaz";
  }
  return "?";
}

char area_type_char(AreaType t) {
  switch (t) {
    case AreaType::C: return 'C';
    case AreaType::M: return 'M';
    case AreaType::R: return 'R';
  }
  return '?';
}

AreaType area_type_from_char(char c) {
  switch (c) {
    case 'C': case 'c': return AreaType::C;
    case 'M': case 'm': return AreaType::M;
    case 'R': case 'r': return AreaType::R;
    default: throw ParseError(std::string("bad area type '") + c + "'");
  }
}

// ---------------------------------------------------------------------------

SctgGroupMap::SctgGroupMap(std::map<std::string, int, std::less<>> table) : table_(std::move(table)) {
  std::set<int> groups;
  for (const auto& [code, group] : table_) {
    if (group < 1) throw ConfigError("sctg group must be >= 1 (code " + code + ")");
    groups.insert(group);
  }
  if (!groups.empty()) {
    num_groups_ = *groups.rbegin();
    if (static_cast<int>(groups.size()) != num_groups_) {
      throw ConfigError("sctg group map does not cover groups 1.." + std::to_string(num_groups_));
    }
  }
}

SctgGroupMap SctgGroupMap::default_map() {
  // Contiguous ranges of the 43 two-digit SCTG codes.
  static constexpr int upper[] = {5, 9, 14, 19, 24, 30, 34, 38, 43};
  std::map<std::string, int, std::less<>> table;
  int group = 1;
  for (int code = 1; code <= 43; ++code) {
    if (code > upper[group - 1]) ++group;
    char buf[4];
    std::snprintf(buf, sizeof(buf), "%02d", code);
    table.emplace(buf, group);
  }
  return SctgGroupMap(std::move(table));
}

SctgGroupMap SctgGroupMap::from_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw SchemaError("sctg group map: empty file");
  const auto cols = csv::locate_columns(*header, {"sctg", "group"});
  std::map<std::string, int, std::less<>> table;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() < header->size()) throw ParseError("sctg group map: short row");
    const auto group = csv::parse_double((*row)[cols[1]]);
    if (!group) throw ParseError("sctg group map: bad group '" + (*row)[cols[1]] + "'");
    table[(*row)[cols[0]]] = static_cast<int>(*group);
  }
  return SctgGroupMap(std::move(table));
}

int SctgGroupMap::group_of(std::string_view sctg) const {
  auto it = table_.find(sctg);
  if (it == table_.end()) throw UnknownCategory("unknown SCTG code '" + std::string(sctg) + "'");
  return it->second;
}

bool SctgGroupMap::contains(std::string_view sctg) const { return table_.find(sctg) != table_.end(); }

int sctg_to_group(std::string_view sctg, const SctgGroupMap& map) { return map.group_of(sctg); }

// ---------------------------------------------------------------------------

AreaTypeLookup::AreaTypeLookup(std::map<std::string, AreaType, std::less<>> table) : table_(std::move(table)) {}

AreaTypeLookup AreaTypeLookup::from_csv(std::istream& in) {
  auto header = csv::read_record(in);
  if (!header) throw SchemaError("area type lookup: empty file");
  const auto cols = csv::locate_columns(*header, {"area", "type"});
  std::map<std::string, AreaType, std::less<>> table;
  while (auto row = csv::read_record(in)) {
    if (row->size() == 1 && row->front().empty()) continue;
    if (row->size() < header->size()) throw ParseError("area type lookup: short row");
    const auto& type = (*row)[cols[1]];
    if (type.size() != 1) throw ParseError("area type lookup: bad type '" + type + "'");
    table[(*row)[cols[0]]] = area_type_from_char(type[0]);
  }
  return AreaTypeLookup(std::move(table));
}

AreaType AreaTypeLookup::type_of(std::string_view area) const {
  auto it = table_.find(area);
  if (it == table_.end()) throw UnknownArea("unknown CFS area '" + std::string(area) + "'");
  return it->second;
}

void AreaTypeLookup::write_csv(std::ostream& out) const {
  out << "area,type\n";
  for (const auto& [area, type] : table_) out << csv::escape(area) << ',' << area_type_char(type) << '\n';
}

AreaType classify_area(std::string_view area, const AreaTypeLookup& lookup) { return lookup.type_of(area); }

}  // namespace fmc
