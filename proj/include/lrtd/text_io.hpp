#pragma once

// Line-oriented text records: space-separated fields, first field a tag.
// Doubles are written with 17 significant digits so they reload bit-exact.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lrtd/error.hpp"

namespace lrtd::text {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void append_double(std::string& out, double x) {
  out += ' ';
  out += format_double(x);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    std::size_t end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

/// Cursor over the fields of one record; every read names the field it expects.
class Record {
 public:
  Record(std::size_t line_no, std::string_view line)
      : line_no_(line_no), fields_(split_fields(line)) {}

  std::size_t line() const { return line_no_; }
  std::size_t remaining() const { return fields_.size() - pos_; }
  bool empty() const { return fields_.empty(); }

  std::string_view word(const std::string& field) {
    if (pos_ >= fields_.size()) fail(field, "missing");
    return fields_[pos_++];
  }

  double real(const std::string& field) {
    auto w = word(field);
    double v = 0.0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size())
      fail(field, "not a number: '" + std::string(w) + "'");
    return v;
  }

  std::uint64_t u64(const std::string& field) {
    auto w = word(field);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size())
      fail(field, "not a non-negative integer: '" + std::string(w) + "'");
    return v;
  }

  std::size_t count(const std::string& field) { return static_cast<std::size_t>(u64(field)); }

  /// Reads "key=value" and checks the key.
  std::string_view keyed(const std::string& key) {
    auto w = word(key);
    if (w.size() <= key.size() || w.substr(0, key.size()) != key || w[key.size()] != '=')
      fail(key, "expected '" + key + "=...', got '" + std::string(w) + "'");
    return w.substr(key.size() + 1);
  }

  double keyed_real(const std::string& key) {
    auto v = keyed(key);
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) fail(key, "not a number");
    return x;
  }

  std::uint64_t keyed_u64(const std::string& key) {
    auto v = keyed(key);
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) fail(key, "not a non-negative integer");
    return x;
  }

  void expect_end() {
    if (pos_ != fields_.size())
      fail("end of record", "unexpected trailing field '" + std::string(fields_[pos_]) + "'");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(line_no_, field, what);
  }

 private:
  std::size_t line_no_;
  std::vector<std::string_view> fields_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// write never leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

/// Splits into lines; a trailing newline does not produce an empty last line.
inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(pos, end - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    out.push_back(l);
    pos = end + 1;
  }
  return out;
}

}  // namespace lrtd::text
