#pragma once

#include <stdexcept>
#include <string>

namespace cmot {

enum class Errc {
  invalid_argument,
  out_of_bounds,
  shape_mismatch,
  singular,
  parse,
  unknown_key,
  bad_magic,
  bad_version,
  truncated,
  dimension_mismatch,
  io,
};

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::out_of_bounds: return "out of bounds";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::singular: return "singular matrix";
    case Errc::parse: return "parse error";
    case Errc::unknown_key: return "unknown key";
    case Errc::bad_magic: return "bad magic";
    case Errc::bad_version: return "bad version";
    case Errc::truncated: return "truncated payload";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::io: return "i/o error";
  }
  return "error";
}

// Every failure raised by the library carries a kind so callers (and tests)
// can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace cmot
