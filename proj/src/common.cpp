#include "lingsim/common.hpp"

#include <fmt/core.h>

namespace lingsim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::invalid: return "invalid";
    case ErrorKind::shape: return "shape";
    case ErrorKind::mismatch: return "mismatch";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

std::string hex16(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t parse_hex16(std::string_view s) {
  if (s.size() != 16) throw Error(ErrorKind::parse, fmt::format("digest '{}' is not 16 hex chars", s));
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw Error(ErrorKind::parse, fmt::format("digest '{}' is not hex", s));
  }
  return v;
}

}  // namespace lingsim
