#pragma once

#include <stdexcept>
#include <string>

namespace occ {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Parse,
  DegenerateGeometry,
  NotWatertight,
  InvalidSpec,
  EmptyShape,
  DimensionMismatch,
  TapeIncomplete,
  NonFiniteLoss,
  EmptyField,
  Io,
  Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::NotWatertight: return "NotWatertight";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EmptyShape: return "EmptyShape";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TapeIncomplete: return "TapeIncomplete";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyField: return "EmptyField";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace occ
