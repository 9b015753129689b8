#include "fmc/ingest.hpp"

#include <cmath>

#include "fmc/csv.hpp"

namespace fmc {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_number(const std::string& column, const std::string& raw) {
  auto v = csv::parse_double(raw);
  if (!v || !std::isfinite(*v)) throw FieldError(column, raw, "not a decimal number");
  return *v;
}

bool parse_flag(const std::string& column, const std::string& raw) {
  const auto s = trim(raw);
  if (s == "Y" || s == "y" || s == "1" || s == "T" || s == "true") return true;
  if (s == "N" || s == "n" || s == "0" || s == "F" || s == "false" || s.empty()) return false;
  throw FieldError(column, raw, "not a Y/N flag");
}

std::string canonical_mode_code(ModeLabel m) {
  switch (m) {
    case ModeLabel::ForHireTruck: return "04";
    case ModeLabel::PrivateTruck: return "05";
    case ModeLabel::Parcel: return "14";
    case ModeLabel::Air: return "11";
    case ModeLabel::Other: return "06";
  }
  return "00";
}

}  // namespace

std::vector<std::string> ColumnMap::columns() const {
  return {id, orig, dest, naics, sctg, mode, value, weight, gc_dist, routed_dist, temp, export_flag, hazmat};
}

std::string normalize_mode_code(std::string_view raw) {
  auto s = std::string(trim(raw));
  if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') s.insert(s.begin(), '0');
  return s;
}

ShipmentRecord validate_record(const RawRow& row, const ColumnMap& schema, const SctgGroupMap& groups) {
  ShipmentRecord r;
  r.id = std::string(trim(row.id));
  if (r.id.empty()) throw FieldError(schema.id, row.id, "empty id");

  r.weight_lb = parse_number(schema.weight, row.weight);
  if (!(r.weight_lb > 0.0)) throw FieldError(schema.weight, row.weight, "weight must be positive");
  r.value_usd = parse_number(schema.value, row.value);
  if (r.value_usd < 0.0) throw FieldError(schema.value, row.value, "value must be nonnegative");
  r.gc_dist_mi = parse_number(schema.gc_dist, row.gc_dist);
  if (r.gc_dist_mi < 0.0) throw FieldError(schema.gc_dist, row.gc_dist, "distance must be nonnegative");
  r.routed_dist_mi = parse_number(schema.routed_dist, row.routed_dist);
  if (r.routed_dist_mi < 0.0) throw FieldError(schema.routed_dist, row.routed_dist, "distance must be nonnegative");

  r.sctg = std::string(trim(row.sctg));
  try {
    r.sctg_group = groups.group_of(r.sctg);
  } catch (const UnknownCategory&) {
    throw FieldError(schema.sctg, row.sctg, "unknown SCTG code");
  }
  r.naics = std::string(trim(row.naics));
  if (r.naics.empty()) throw FieldError(schema.naics, row.naics, "empty NAICS");
  r.orig_area = std::string(trim(row.orig));
  if (r.orig_area.empty()) throw FieldError(schema.orig, row.orig, "empty origin area");
  r.dest_area = std::string(trim(row.dest));
  if (r.dest_area.empty()) throw FieldError(schema.dest, row.dest, "empty destination area");

  const auto haz = trim(row.hazmat);
  if (haz == schema.hazmat_class3) {
    r.hazmat = Hazmat::Class3;
  } else if (haz == schema.hazmat_other) {
    r.hazmat = Hazmat::OtherHaz;
  } else if (haz == schema.hazmat_none) {
    r.hazmat = Hazmat::NotHaz;
  } else {
    throw FieldError(schema.hazmat, row.hazmat, "not a hazmat code");
  }

  r.temp_controlled = parse_flag(schema.temp, row.temp);
  r.export_flag = parse_flag(schema.export_flag, row.export_flag);

  const auto mode = aggregate_mode(normalize_mode_code(row.mode));
  if (!mode) throw FieldError(schema.mode, row.mode, "unmatched mode code");
  r.mode = *mode;
  return r;
}

IngestResult parse_shipments(std::istream& source, const ColumnMap& schema, const SctgGroupMap& groups,
                             const IngestOptions& options) {
  auto header = csv::read_record(source);
  if (!header) throw SchemaError("input has no header row");
  const auto idx = csv::locate_columns(*header, schema.columns());

  IngestResult result;
  auto& report = result.report;
  while (auto fields = csv::read_record(source)) {
    if (fields->size() == 1 && fields->front().empty()) continue;  // blank line
    ++report.total_rows;
    if (fields->size() != header->size()) {
      if (options.strict) {
        throw FieldError("<row>", std::to_string(report.total_rows),
                         "expected " + std::to_string(header->size()) + " fields");
      }
      ++report.rejected_invalid_field;
      ++report.column_errors["<row>"];
      continue;
    }
    const auto& f = *fields;
    RawRow raw{f[idx[0]], f[idx[1]], f[idx[2]], f[idx[3]], f[idx[4]],  f[idx[5]], f[idx[6]],
               f[idx[7]], f[idx[8]], f[idx[9]], f[idx[10]], f[idx[11]], f[idx[12]]};
    if (!aggregate_mode(normalize_mode_code(raw.mode))) {
      ++report.rejected_unmatched_mode;
      continue;
    }
    try {
      result.records.push_back(validate_record(raw, schema, groups));
      ++report.accepted;
    } catch (const FieldError& e) {
      if (options.strict) throw;
      ++report.rejected_invalid_field;
      ++report.column_errors[e.column()];
    }
  }
  return result;
}

void write_shipments(std::ostream& out, const std::vector<ShipmentRecord>& records, const ColumnMap& schema) {
  csv::write_record(out, schema.columns());
  for (const auto& r : records) {
    std::string haz = r.hazmat == Hazmat::Class3   ? schema.hazmat_class3
                      : r.hazmat == Hazmat::OtherHaz ? schema.hazmat_other
                                                     : schema.hazmat_none;
    csv::write_record(out, {r.id, r.orig_area, r.dest_area, r.naics, r.sctg, canonical_mode_code(r.mode),
                            csv::format_double(r.value_usd), csv::format_double(r.weight_lb),
                            csv::format_double(r.gc_dist_mi), csv::format_double(r.routed_dist_mi),
                            r.temp_controlled ? "Y" : "N", r.export_flag ? "Y" : "N", haz});
  }
}

}  // namespace fmc
