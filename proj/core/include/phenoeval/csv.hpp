#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace phenoeval {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of `column` in the header, or -1.
  [[nodiscard]] int column_index(std::string_view column) const;
};

// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
// quoted fields may span lines, CRLF or LF record terminators. The first
// record is the header. A UTF-8 BOM at the start is skipped.
// Throws DataError on an unterminated quote or a row whose width differs
// from the header.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Quotes a field only when needed.
std::string csv_escape(std::string_view field);

}  // namespace phenoeval
