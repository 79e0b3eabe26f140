#pragma once

#include <stdexcept>
#include <string>

namespace ctc {

enum class ErrorKind {
  kInvalidArgument,
  kFormat,
  kModelMismatch,
  kDivergence,
  kIo,
};

// Single exception type for the codec; the kind selects the CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace ctc
