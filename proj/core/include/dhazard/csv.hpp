#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dhazard::csv {

// Header plus data rows as raw strings. Quoted fields follow RFC 4180:
// embedded commas, newlines and doubled quotes are supported.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Returns the column position or -1.
  int column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

// Quotes a field only when it needs it.
std::string quote(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

}  // namespace dhazard::csv
