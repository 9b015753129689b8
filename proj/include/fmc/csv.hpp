#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fmc::csv {

/// Reads one RFC 4180 record (quoted fields may span lines). Returns nullopt
/// at end of input. A trailing '\r' before the newline is dropped.
std::optional<std::vector<std::string>> read_record(std::istream& in);

/// Quotes a field only when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

void write_record(std::ostream& out, const std::vector<std::string>& fields);

/// Locale-free decimal parse of the whole string; nullopt on any junk.
std::optional<double> parse_double(std::string_view text);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// Index of each wanted column in a header row; throws SchemaError when a
/// column is missing or duplicated.
std::vector<std::size_t> locate_columns(const std::vector<std::string>& header,
                                        const std::vector<std::string>& wanted);

}  // namespace fmc::csv
