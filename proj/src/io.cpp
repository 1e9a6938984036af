#include "nsflow/io.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>

#include "nsflow/errors.hpp"

namespace nsflow {

namespace {

bool needs_csv_quotes(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

void append_csv_cell(std::string& out, const std::string& s) {
  if (!needs_csv_quotes(s)) {
    out += s;
    return;
  }
  out += '"';
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

// to_chars output for finite doubles is already a JSON number; anything
// else (free-form labels, inf, nan, empty cells) gets quoted
bool is_json_number(const std::string& s) {
  const char* p = s.c_str();
  const char* e = p + s.size();
  if (p == e) return false;
  if (*p == '-') ++p;
  if (p == e || *p < '0' || *p > '9') return false;
  if (*p == '0') {
    ++p;
  } else {
    while (p != e && *p >= '0' && *p <= '9') ++p;
  }
  if (p != e && *p == '.') {
    ++p;
    if (p == e || *p < '0' || *p > '9') return false;
    while (p != e && *p >= '0' && *p <= '9') ++p;
  }
  if (p != e && (*p == 'e' || *p == 'E')) {
    ++p;
    if (p != e && (*p == '+' || *p == '-')) ++p;
    if (p == e || *p < '0' || *p > '9') return false;
    while (p != e && *p >= '0' && *p <= '9') ++p;
  }
  return p == e;
}

void append_json_string(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if ((unsigned char)c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_u64(uint64_t v) {
  char buf[24];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_i64(int64_t v) {
  char buf[24];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != header.size())
    throw DimensionMismatch("row arity does not match the header");
  rows.push_back(std::move(cells));
}

std::string to_csv(const Table& t) {
  std::string out;
  for (size_t j = 0; j < t.header.size(); ++j) {
    if (j) out += ',';
    append_csv_cell(out, t.header[j]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      append_csv_cell(out, row[j]);
    }
    out += '\n';
  }
  return out;
}

std::string to_json(const Table& t) {
  std::string out = "[";
  for (size_t i = 0; i < t.rows.size(); ++i) {
    out += i ? ",\n " : "\n ";
    out += '{';
    for (size_t j = 0; j < t.header.size(); ++j) {
      if (j) out += ',';
      append_json_string(out, t.header[j]);
      out += ':';
      const std::string& cell = t.rows[i][j];
      if (is_json_number(cell)) {
        out += cell;
      } else {
        append_json_string(out, cell);
      }
    }
    out += '}';
  }
  out += "\n]\n";
  return out;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw IoError("cannot open for writing: " + tmp);
  size_t put = content.empty()
                   ? 0
                   : std::fwrite(content.data(), 1, content.size(), fp);
  int bad = (put != content.size()) | (std::fflush(fp) != 0);
  bad |= (std::fclose(fp) != 0);
  if (bad || std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("write failed: " + path);
  }
}

}  // namespace nsflow
