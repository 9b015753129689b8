#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "fmc/core.hpp"

namespace fmc {

/// Logical field -> column name. Defaults follow the 2017 CFS PUF layout.
struct ColumnMap {
  std::string id = "SHIPMT_ID";
  std::string orig = "ORIG_CFS_AREA";
  std::string dest = "DEST_CFS_AREA";
  std::string naics = "NAICS";
  std::string sctg = "SCTG";
  std::string mode = "MODE";
  std::string value = "SHIPMT_VALUE";
  std::string weight = "SHIPMT_WGHT";
  std::string gc_dist = "SHIPMT_DIST_GC";
  std::string routed_dist = "SHIPMT_DIST_ROUTED";
  std::string temp = "TEMP_CNTL_YN";
  std::string export_flag = "EXPORT_YN";
  std::string hazmat = "HAZMAT";

  /// Raw HAZMAT codes (PUF: P = Class 3.0, H = other hazmat, N = not hazmat).
  std::string hazmat_class3 = "P";
  std::string hazmat_other = "H";
  std::string hazmat_none = "N";

  std::vector<std::string> columns() const;
};

/// Raw row keyed by logical field, as read from the file.
struct RawRow {
  std::string id, orig, dest, naics, sctg, mode, value, weight, gc_dist, routed_dist, temp, export_flag, hazmat;
};

struct IngestReport {
  std::size_t total_rows = 0;
  std::size_t accepted = 0;
  std::size_t rejected_unmatched_mode = 0;
  std::size_t rejected_invalid_field = 0;
  std::map<std::string, std::size_t> column_errors;

  double unmatched_fraction() const {
    return total_rows ? static_cast<double>(rejected_unmatched_mode) / static_cast<double>(total_rows) : 0.0;
  }
  bool operator==(const IngestReport&) const = default;
};

struct IngestResult {
  std::vector<ShipmentRecord> records;
  IngestReport report;
};

struct IngestOptions {
  bool strict = false;  ///< abort on the first invalid row instead of tallying
};

/// Validates one raw row. Throws FieldError naming the offending column.
/// The mode is assumed mappable; unmatched modes are filtered by the caller.
ShipmentRecord validate_record(const RawRow& row, const ColumnMap& schema, const SctgGroupMap& groups);

/// Streams a PUF-schema CSV. Unmatched-mode rows are counted and dropped,
/// invalid rows are counted (or rethrown in strict mode); order is preserved.
IngestResult parse_shipments(std::istream& source, const ColumnMap& schema, const SctgGroupMap& groups,
                             const IngestOptions& options = {});

/// Writes records back out in the same PUF schema (mode as its canonical
/// raw code, hazmat/flags in PUF encoding).
void write_shipments(std::ostream& out, const std::vector<ShipmentRecord>& records, const ColumnMap& schema = {});

/// Normalizes a raw MODE cell: trims blanks and left-pads one-digit codes.
std::string normalize_mode_code(std::string_view raw);

}  // namespace fmc
