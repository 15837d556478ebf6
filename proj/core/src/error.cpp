#include <qforce/error.hpp>

namespace qforce {

const char *to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument:
        return "invalid_argument";
    case ErrorKind::InvalidState:
        return "invalid_state";
    case ErrorKind::InvalidMeasurement:
        return "invalid_measurement";
    case ErrorKind::InvalidSensitivity:
        return "invalid_sensitivity";
    case ErrorKind::Grid:
        return "grid";
    case ErrorKind::Domain:
        return "domain";
    case ErrorKind::NumericalInstability:
        return "numerical_instability";
    case ErrorKind::Degenerate:
        return "degenerate";
    case ErrorKind::NoBracket:
        return "no_bracket";
    case ErrorKind::Io:
        return "io";
    }
    return "unknown";
}

bool is_numerical(ErrorKind kind) {
    return kind == ErrorKind::NumericalInstability ||
           kind == ErrorKind::Degenerate || kind == ErrorKind::NoBracket;
}

Error::Error(ErrorKind kind, const std::string &message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string &message) {
    throw Error(kind, message);
}

} // namespace qforce
