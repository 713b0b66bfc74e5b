#pragma once

#include <stdexcept>
#include <string>

namespace advdet {

enum class errc {
  invalid_input,
  invalid_range,
  invalid_size,
  config,
  format,
  consistency,
  io,
  protocol,
  numeric,
};

inline const char* to_string(errc code) {
  switch (code) {
    case errc::invalid_input: return "invalid input";
    case errc::invalid_range: return "invalid range";
    case errc::invalid_size: return "invalid size";
    case errc::config: return "config error";
    case errc::format: return "format error";
    case errc::consistency: return "consistency error";
    case errc::io: return "I/O error";
    case errc::protocol: return "protocol error";
    case errc::numeric: return "numeric failure";
  }
  return "error";
}

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace advdet
