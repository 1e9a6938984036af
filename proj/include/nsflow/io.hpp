#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nsflow {

inline constexpr const char* kToolVersion = "1.0.0";

// shortest decimal that round-trips; "nan"/"inf" pass through
std::string format_double(double v);
std::string format_u64(uint64_t v);
std::string format_i64(int64_t v);

// Rectangular result table. Cells hold final byte-exact text so the CSV and
// JSON renderings of one run cannot drift from each other.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // throws DimensionMismatch unless cells.size() == header.size()
  void add_row(std::vector<std::string> cells);
};

// header line + one line per row, comma separated, "\n" line ends; cells
// containing a comma, quote or newline get the usual quote-and-double rule
std::string to_csv(const Table& t);

// array of objects keyed by header; cells that parse as JSON numbers are
// emitted bare, everything else as a string
std::string to_json(const Table& t);

// write to <path>.tmp in the same directory, then rename over path
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace nsflow
