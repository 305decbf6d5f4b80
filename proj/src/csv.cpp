#include "pvot/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include <fmt/format.h>

#include "pvot/error.hpp"

namespace pvot::csv {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view line, char separator) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(separator, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

NumericTable parse_numeric(std::istream& in, std::string_view source_name) {
  NumericTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    auto fields = split(content);
    if (!have_header) {
      for (const auto& name : fields) {
        if (name.empty()) {
          throw Error(ErrorKind::MalformedCsv, fmt::format("{}:{}: empty column name in header", source_name, line_no));
        }
        double probe = 0.0;
        const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), probe);
        if (ec == std::errc() && ptr == name.data() + name.size()) {
          throw Error(ErrorKind::MalformedCsv,
                      fmt::format("{}:{}: header row required, found numeric token '{}'", source_name, line_no, name));
        }
      }
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::MalformedCsv, fmt::format("{}:{}: expected {} fields, found {}", source_name, line_no,
                                                       table.header.size(), fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto& token = fields[j];
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), row[j]);
      if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
        throw Error(ErrorKind::MalformedCsv,
                    fmt::format("{}:{}: column '{}' has non-numeric token '{}'", source_name, line_no, table.header[j],
                                token));
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorKind::MalformedCsv, fmt::format("{}: no header row", source_name));
  return table;
}

NumericTable read_numeric(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open data file '{}'", path.string()));
  return parse_numeric(in, path.string());
}

std::string format_double(double value) { return fmt::format("{:.17g}", value); }

std::string format_shortest(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) return format_double(value);
  return std::string(buffer, ptr);
}

}  // namespace pvot::csv
