#pragma once

#include <stdexcept>
#include <string>

namespace openvision {

// Categories map onto CLI exit codes (see exit_code()).
enum class ErrorKind {
  dimension,
  config,
  data,
  contract,
  numeric,
  io,
  determinism,
  context_overflow,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 2 config error, 3 data error, 4 numeric error, 1 anything else.
int exit_code(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) {
    fail(kind, message);
  }
}

}  // namespace openvision
