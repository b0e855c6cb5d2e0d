#pragma once

#include <stdexcept>
#include <string>

namespace aseg {

enum class ErrorCode {
  invalid_argument,
  io,
  format,
  numeric,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }
[[noreturn]] inline void fail_invalid(const std::string& msg) { fail(ErrorCode::invalid_argument, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { fail(ErrorCode::io, msg); }
[[noreturn]] inline void fail_format(const std::string& msg) { fail(ErrorCode::format, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { fail(ErrorCode::numeric, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

inline void require_arg(bool cond, const std::string& msg) {
  require(cond, ErrorCode::invalid_argument, msg);
}

}  // namespace aseg
