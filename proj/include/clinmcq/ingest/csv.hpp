#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "clinmcq/core/error.hpp"

namespace clinmcq::csv {

using Row = std::vector<std::string>;

/// RFC-4180 reader over an in-memory buffer: quoted fields, doubled quotes,
/// embedded delimiters and newlines, LF or CRLF line endings. A UTF-8 BOM at
/// the start is skipped.
class Reader {
 public:
  Reader(std::string_view text, char delimiter = ',') : text_(text), delim_(delimiter) {
    if (text_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
  }

  /// Reads the next record into `row`. Returns false at end of input.
  bool next(Row& row) {
    row.clear();
    if (pos_ >= text_.size()) return false;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (;;) {
      if (pos_ >= text_.size()) {
        if (quoted) throw DataError("unterminated quoted field at line " + std::to_string(line_));
        row.push_back(std::move(field));
        ++line_;
        return true;
      }
      const char c = text_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field += '"';
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
        continue;
      }
      if (c == '"' && !field_started) {
        quoted = true;
        field_started = true;
      } else if (c == delim_) {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
        row.push_back(std::move(field));
        ++line_;
        return true;
      } else {
        field += c;
        field_started = true;
      }
    }
  }

 private:
  std::string_view text_;
  char delim_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline bool needs_quoting(std::string_view field, char delimiter) {
  if (field.empty()) return false;
  if (field.front() == ' ' || field.back() == ' ') return true;
  for (char c : field) {
    if (c == delimiter || c == '"' || c == '\n' || c == '\r') return true;
  }
  return false;
}

inline void append_field(std::string& out, std::string_view field, char delimiter) {
  if (!needs_quoting(field, delimiter)) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

inline void append_row(std::string& out, const Row& row, char delimiter) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += delimiter;
    append_field(out, row[i], delimiter);
  }
  out += '\n';
}

}  // namespace clinmcq::csv
