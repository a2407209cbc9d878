#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lungtex {

// Plain comma-separated tables: no quoting, first line is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position; throws FormatError when absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);
CsvTable read_csv(std::istream& in);
double parse_double(const std::string& text, std::string_view what);
long long parse_int(const std::string& text, std::string_view what);

}  // namespace lungtex
