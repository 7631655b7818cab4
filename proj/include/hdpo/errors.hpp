#pragma once

// Error taxonomy shared across the library. Precondition violations use
// std::invalid_argument. The CLI maps exception classes onto process exit
// codes: config problems -> 2, numeric failures -> 3, I/O failures -> 4.

#include <stdexcept>
#include <string>

namespace hdpo {

// Bad config file contents: unknown keys, wrong types, unknown names.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A computation failed (as opposed to being asked a malformed question).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Quadrature did not stabilise when the node count was doubled.
struct QuadratureError : NumericError {
    using NumericError::NumericError;
};

// A distribution places mass where the reference has none.
struct SupportError : NumericError {
    using NumericError::NumericError;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hdpo
