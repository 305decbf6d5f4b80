#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pvot::csv {

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a comma-separated file with a header row followed by numeric rows.
/// Lines starting with '#' and blank lines are skipped. Errors name the file,
/// line and offending token.
NumericTable read_numeric(const std::filesystem::path& path);
NumericTable parse_numeric(std::istream& in, std::string_view source_name);

/// 17 significant digits, enough for an exact round trip.
std::string format_double(double value);
/// Shortest text that parses back to the same double.
std::string format_shortest(double value);

std::vector<std::string> split(std::string_view line, char separator = ',');
std::string_view trim(std::string_view text);

}  // namespace pvot::csv
