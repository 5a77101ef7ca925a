#pragma once

// Small text helpers shared by the manifest and record formats.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/grid.hpp"

namespace extmem::text {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

/// Error text "<where>: key '<key>': <what>".
inline config_error bad_value(std::string_view where, std::string_view key, std::string_view what) {
  return config_error(std::string(where) + ": key '" + std::string(key) + "': " + std::string(what));
}

template <class T>
T parse_number(std::string_view value, std::string_view key, std::string_view where) {
  const std::string v = trim(value);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw bad_value(where, key, "expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(std::string_view value, std::string_view key, std::string_view where) {
  const std::string v = trim(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw bad_value(where, key, "expected true or false, got '" + v + "'");
}

inline std::string format_cell(Cell c) { return std::to_string(c.x) + "," + std::to_string(c.y); }

inline Cell parse_cell(std::string_view value, std::string_view key, std::string_view where) {
  const auto parts = split(value, ',');
  if (parts.size() != 2) throw bad_value(where, key, "expected 'x,y', got '" + std::string(value) + "'");
  return Cell{parse_number<int>(parts[0], key, where), parse_number<int>(parts[1], key, where)};
}

/// Cells joined by ';'.
inline std::string format_cells(const std::vector<Cell>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? ";" : "") + format_cell(cells[i]);
  return out;
}

inline std::vector<Cell> parse_cells(std::string_view value, std::string_view key, std::string_view where) {
  std::vector<Cell> cells;
  for (const auto& part : split(value, ';')) cells.push_back(parse_cell(part, key, where));
  return cells;
}

template <class T>
std::string join(const std::vector<T>& xs, std::string (*fmt)(T), std::string_view sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? std::string(sep) : std::string()) + fmt(xs[i]);
  return out;
}

/// "a-b" inclusive ranges and single values, comma separated: "0-29" or "1, 4, 9".
inline std::vector<std::uint64_t> parse_seed_list(std::string_view value, std::string_view key,
                                                  std::string_view where) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(value, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(parse_number<std::uint64_t>(part, key, where));
      continue;
    }
    const auto lo = parse_number<std::uint64_t>(part.substr(0, dash), key, where);
    const auto hi = parse_number<std::uint64_t>(part.substr(dash + 1), key, where);
    if (hi < lo) throw bad_value(where, key, "empty seed range '" + part + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  return seeds;
}

/// Inverse of parse_seed_list, collapsing consecutive runs.
inline std::string format_seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size();) {
    std::size_t j = i;
    while (j + 1 < seeds.size() && seeds[j + 1] == seeds[j] + 1) ++j;
    if (!out.empty()) out += ", ";
    out += std::to_string(seeds[i]);
    if (j > i) out += "-" + std::to_string(seeds[j]);
    i = j + 1;
  }
  return out;
}

}  // namespace extmem::text
