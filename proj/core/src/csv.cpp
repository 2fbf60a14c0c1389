#include "phenoeval/csv.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "phenoeval/error.hpp"

namespace phenoeval {

int CsvTable::column_index(std::string_view column) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) return static_cast<int>(i);
  }
  return -1;
}

namespace {

// Splits the whole input into records. Returns false at end of input.
class RecordReader {
 public:
  explicit RecordReader(std::string text) : text_(std::move(text)) {
    if (text_.compare(0, 3, "\xEF\xBB\xBF") == 0) pos_ = 3;
  }

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (pos_ >= text_.size()) return false;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (quoted) {
        if (c == '"') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            field.push_back('"');
            pos_ += 2;
            continue;
          }
          quoted = false;
          ++pos_;
          continue;
        }
        if (c == '\n') ++line_;
        field.push_back(c);
        ++pos_;
        continue;
      }
      if (c == '"' && field.empty() && !field_started_quoted) {
        quoted = true;
        field_started_quoted = true;
        ++pos_;
        continue;
      }
      if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_started_quoted = false;
        ++pos_;
        continue;
      }
      if (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') {
        pos_ += 2;
        ++line_;
        fields.push_back(std::move(field));
        return true;
      }
      if (c == '\n') {
        ++pos_;
        ++line_;
        fields.push_back(std::move(field));
        return true;
      }
      field.push_back(c);
      ++pos_;
    }
    if (quoted) {
      throw DataError("CSV: unterminated quoted field starting before line " + std::to_string(line_));
    }
    fields.push_back(std::move(field));
    return true;
  }

  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

CsvTable read_csv(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  RecordReader reader(std::move(text));
  CsvTable table;
  if (!reader.next(table.header)) return table;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    // A blank line carries no data.
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != table.header.size()) {
      throw DataError("CSV: record ending at line " + std::to_string(reader.line() - 1) + " has " +
                      std::to_string(fields.size()) + " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(fields);
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file: " + path);
  return read_csv(in);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace phenoeval
