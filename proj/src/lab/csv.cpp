#include "advlab/lab/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "advlab/error.hpp"

namespace advlab {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void CsvTable::add_row(const std::vector<CsvCell>& cells) {
  if (cells.size() != header.size()) {
    std::ostringstream os;
    os << "CSV row has " << cells.size() << " cells, header has " << header.size();
    throw Error(Errc::dimension, os.str());
  }
  std::vector<std::string> row;
  row.reserve(cells.size());
  for (const CsvCell& c : cells) {
    if (const auto* d = std::get_if<double>(&c))
      row.push_back(format_double(*d));
    else if (const auto* i = std::get_if<std::int64_t>(&c))
      row.push_back(std::to_string(*i));
    else
      row.push_back(std::get<std::string>(c));
  }
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(Errc::format, "no CSV column named " + name);
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  return std::stod(rows.at(row).at(column(name)));
}

void write_csv(const CsvTable& table, std::ostream& out) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
}

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  write_csv(table, out);
  if (!out) throw Error(Errc::io, "failed writing " + path);
}

std::string to_csv(const CsvTable& table) {
  std::ostringstream os;
  write_csv(table, os);
  return os.str();
}

}  // namespace advlab
