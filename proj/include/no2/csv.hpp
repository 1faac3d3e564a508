#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "no2/errors.hpp"

namespace no2 {
namespace csv {

/// Shortest decimal representation that round-trips the exact double value.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep,
                                           std::size_t max_fields = 0) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    if (max_fields > 0 && out.size() + 1 == max_fields) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, const std::string& where) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw InputError(where + ": invalid number '" + std::string(field) + "'");
  return v;
}

inline long parse_long(std::string_view field, const std::string& where) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw InputError(where + ": invalid integer '" + std::string(field) + "'");
  return v;
}

/// Line-oriented reader that skips blank lines and `#` comment lines while
/// tracking physical line numbers for error messages.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw InputError("cannot open file: " + path);
  }

  /// Next data line; returns false at end of file.
  bool next(std::string& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      const std::string_view t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      out = std::string(t);
      return true;
    }
    return false;
  }

  std::size_t lineno() const { return lineno_; }
  std::string where() const {
    return path_ + ":" + std::to_string(lineno_);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t lineno_ = 0;
};

/// Writer that prepends `# key: value` metadata lines before the header.
class Writer {
 public:
  Writer(const std::string& path,
         const std::vector<std::pair<std::string, std::string>>& meta = {})
      : out_(path) {
    if (!out_) throw InputError("cannot open file for writing: " + path);
    for (const auto& [k, v] : meta) out_ << "# " << k << ": " << v << "\n";
  }

  void line(const std::string& s) { out_ << s << "\n"; }

  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
};

inline void expect_header(const std::string& got, const std::string& want,
                          const std::string& where) {
  if (got != want)
    throw InputError(where + ": unexpected header '" + got + "' (expected '" +
                     want + "')");
}

}  // namespace csv
}  // namespace no2
