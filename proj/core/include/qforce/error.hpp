// Error categories shared by all modules
#pragma once

#include <stdexcept>
#include <string>

namespace qforce {

enum class ErrorKind {
    InvalidArgument,
    InvalidState,
    InvalidMeasurement,
    InvalidSensitivity,
    Grid,
    Domain,
    NumericalInstability,
    Degenerate,
    NoBracket,
    Io,
};

const char *to_string(ErrorKind kind);

/// True for failures of the numerics (as opposed to bad input).
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &message);
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string &message);

} // namespace qforce
