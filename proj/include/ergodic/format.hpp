#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace ergodic {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, result.ptr);
}

}  // namespace ergodic
