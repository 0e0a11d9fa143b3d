#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace vslcrf {

// 17 significant digits: doubles round-trip exactly through text.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a number: '" + tok + "'");
  }
  if (pos != tok.size()) throw std::invalid_argument("not a number: '" + tok + "'");
  return v;
}

inline long parse_long(const std::string& tok) {
  std::size_t pos = 0;
  long v;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("not an integer: '" + tok + "'");
  }
  if (pos != tok.size()) throw std::invalid_argument("not an integer: '" + tok + "'");
  return v;
}

}  // namespace vslcrf
