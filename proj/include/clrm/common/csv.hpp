#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace clrm {

/// Plain comma-separated table. Cells are stored as text so that parsing and
/// re-serializing a file reproduces it byte for byte.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& column_name) const;
  std::string to_string() const;
};

/// Fixed formatting used by every numeric CSV cell ("%.12g").
std::string format_number(double value);

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace clrm
