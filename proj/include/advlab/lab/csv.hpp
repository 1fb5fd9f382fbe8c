#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace advlab {

/// Decimal text with 17 significant digits.
std::string format_double(double v);

using CsvCell = std::variant<double, std::int64_t, std::string>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(const std::vector<CsvCell>& cells);
  std::size_t columns() const { return header.size(); }
  /// Index of a header column; throws when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

void write_csv(const CsvTable& table, std::ostream& out);
void write_csv(const CsvTable& table, const std::string& path);
std::string to_csv(const CsvTable& table);

}  // namespace advlab
