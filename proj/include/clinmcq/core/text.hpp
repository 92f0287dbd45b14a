#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace clinmcq {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Strict decimal parse: the whole (trimmed) cell must be a finite number.
inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

/// Number of digits after the decimal point in a plain decimal literal.
/// Exponent notation is treated as having the digits of its mantissa.
inline int decimal_places(std::string_view s) {
  s = trim(s);
  const auto e = s.find_first_of("eE");
  if (e != std::string_view::npos) s = s.substr(0, e);
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return 0;
  return static_cast<int>(s.size() - dot - 1);
}

/// Fixed-point rendering at `precision` decimals; never emits "-0".
inline std::string format_fixed(double value, int precision) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, precision);
  if (ec != std::errc{}) return std::to_string(value);
  std::string out(buf, ptr);
  if (!out.empty() && out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

inline double pow10i(int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= 10.0;
  return r;
}

/// Value -> integer count of 10^-precision grid units, round half away from zero.
inline std::int64_t to_grid_units(double value, int precision) {
  return static_cast<std::int64_t>(std::llround(value * pow10i(precision)));
}

inline double from_grid_units(std::int64_t units, int precision) {
  return static_cast<double>(units) / pow10i(precision);
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

inline std::optional<std::size_t> letter_index(char letter) {
  if (letter < 'A' || letter > 'Z') return std::nullopt;
  return static_cast<std::size_t>(letter - 'A');
}

}  // namespace clinmcq
