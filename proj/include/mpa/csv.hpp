#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mpa/errors.hpp"

namespace mpa {

// Minimal CSV handling for the fixed schemas this artifact reads and writes.
// No quoting: none of the schemas carry free text with commas.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }

  int require_column(const std::string& name, const std::string& file) const {
    const int c = column(name);
    if (c < 0) throw SchemaError(file + ": missing column '" + name + "'");
    return c;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw SchemaError(path + ": row " + std::to_string(t.rows.size() + 1) +
                        " has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline double parse_double(const std::string& cell, const std::string& file,
                           size_t row, const std::string& col) {
  double v = 0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v))
    throw ParseError(file + ": row " + std::to_string(row + 1) + ", column '" + col +
                     "': non-numeric cell '" + cell + "'");
  return v;
}

// Canonical numeric formatting used by every writer, so that emitted files are
// byte-stable and survive a load/write round trip.
inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw ValidationError("cannot write file: " + path);
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace mpa
