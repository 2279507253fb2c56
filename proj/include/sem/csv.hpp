#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sem::csv {

inline bool needs_quoting(std::string_view field) noexcept {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

inline void write_field(std::ostream& os, std::string_view field) {
  if (!needs_quoting(field)) {
    os << field;
    return;
  }
  os << '"';
  for (char c : field) {
    if (c == '"') os << '"';
    os << c;
  }
  os << '"';
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i != 0) os << ',';
    write_field(os, fields[i]);
  }
  os << "\r\n";
}

inline std::string fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// Reads one record; quoted fields may span lines. Returns false at EOF.
inline bool read_row(std::istream& is, std::vector<std::string>& fields) {
  fields.clear();
  if (is.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (int ch = is.get(); ch != std::char_traits<char>::eof(); ch = is.get()) {
    char c = static_cast<char>(ch);
    any = true;
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          field.push_back('"');
          is.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (any) fields.push_back(std::move(field));
  return any;
}

}  // namespace sem::csv
