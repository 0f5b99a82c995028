#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace oodrecon {

using CsvRow = std::vector<std::string>;

/// RFC-4180-ish parser: handles quoted fields, embedded commas/quotes/newlines,
/// and both LF and CRLF line endings. Returns all rows including the header.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);
std::vector<CsvRow> parse_csv(const std::string& text);

std::string to_csv(const std::vector<CsvRow>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

/// Shortest round-trip decimal representation (std::to_chars); parsing the
/// result recovers the exact double, and the text is platform-stable.
std::string format_double(double v);
double parse_double(const std::string& s);     // strict; throws format error
std::uint64_t parse_u64(const std::string& s); // strict; throws format error
long long parse_i64(const std::string& s);     // strict; throws format error

}  // namespace oodrecon
