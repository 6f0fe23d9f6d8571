#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "psmed/core.hpp"

namespace psmed {

namespace detail {

inline std::string trim_field(std::string s) {
  auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && issp(s[b])) ++b;
  s = s.substr(b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim_field(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim_field(cur));
  return out;
}

// Empty fields and NA-like tokens become NaN so validation can name the row.
inline double parse_number(const std::string& s, std::size_t row, const std::string& col) {
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::InvalidValue, "cannot parse '" + s + "' in column '" + col + "' row " + std::to_string(row));
  return v;
}

}  // namespace detail

inline Table parse_csv(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::IoError, "empty CSV input");
  t.names = detail::split_csv_line(line);
  t.columns.assign(t.names.size(), {});
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim_field(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != t.names.size())
      fail(ErrorKind::InvalidValue, "CSV row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                        " fields, header has " + std::to_string(t.names.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) t.columns[j].push_back(detail::parse_number(fields[j], row, t.names[j]));
    ++row;
  }
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  return parse_csv(in);
}

// Shortest round-trip representation; deterministic for a given value.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (const auto& name : data.covariate_names) out << name << ',';
  out << "z,d,m,y\n";
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.p; ++j) out << format_double(data.xv(i, j)) << ',';
    out << data.z[i] << ',' << data.d[i] << ',' << format_double(data.m[i]) << ',' << format_double(data.y[i]) << '\n';
  }
}

}  // namespace psmed
