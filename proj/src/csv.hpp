#pragma once

// Minimal RFC 4180 CSV reader/writer plus the field codecs of the canonical
// dataset schema. Internal to the library.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace staytime::detail {

using CsvRow = std::vector<std::string>;

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;
  /// 1-based physical line number where each row starts.
  std::vector<std::size_t> lines;
};

/// Parses a whole file. Throws IoError if unreadable or malformed quoting.
CsvTable read_csv(const std::string& path);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

std::string format_double(double v);
std::string format_int(std::int64_t v);
std::string format_ids(std::span<const std::int64_t> ids);

/// Strict parsers; throw std::invalid_argument with a readable message.
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);
bool parse_bool(std::string_view s);
std::vector<std::int64_t> parse_ids(std::string_view s);

}  // namespace staytime::detail
