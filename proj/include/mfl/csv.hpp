#pragma once

#include <charconv>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace mfl {

/// Shortest decimal string that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_real: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a real number: '" + std::string(s) + "'");
  return v;
}

/// Appends one comma-separated row terminated by '\n'.
class CsvRow {
 public:
  explicit CsvRow(std::string& out) : out_(out) {}
  CsvRow& operator<<(double v) { return cell(format_real(v)); }
  CsvRow& operator<<(std::size_t v) { return cell(std::to_string(v)); }
  CsvRow& operator<<(int v) { return cell(std::to_string(v)); }
  CsvRow& operator<<(std::string_view v) { return cell(v); }
  ~CsvRow() { out_ += '\n'; }

 private:
  CsvRow& cell(std::string_view v) {
    if (!first_) out_ += ',';
    first_ = false;
    out_ += v;
    return *this;
  }
  std::string& out_;
  bool first_ = true;
};

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace mfl
