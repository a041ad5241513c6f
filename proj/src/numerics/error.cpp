#include "openvision/error.hpp"

namespace openvision {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension:
      return "dimension error";
    case ErrorKind::config:
      return "config error";
    case ErrorKind::data:
      return "data error";
    case ErrorKind::contract:
      return "contract error";
    case ErrorKind::numeric:
      return "numeric error";
    case ErrorKind::io:
      return "io error";
    case ErrorKind::determinism:
      return "determinism error";
    case ErrorKind::context_overflow:
      return "context overflow";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::dimension:
    case ErrorKind::contract:
      return 2;
    case ErrorKind::data:
    case ErrorKind::io:
    case ErrorKind::context_overflow:
      return 3;
    case ErrorKind::numeric:
    case ErrorKind::determinism:
      return 4;
  }
  return 1;
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace openvision
