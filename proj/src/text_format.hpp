#pragma once

#include <charconv>
#include <string>

namespace eqc {

// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace eqc
