#pragma once

#include <stdexcept>
#include <string>

namespace wassdiff {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// configuration/usage problems -> 1, file problems -> 2, numeric failures -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value or unknown config key.
struct ConfigError : Error {
    using Error::Error;
};

// An argument value outside the function's domain (negative rain rate, t > 1, ...).
struct DomainError : Error {
    using Error::Error;
};

// Mismatched or incompatible array/grid dimensions.
struct DimensionError : Error {
    using Error::Error;
};

// Operation called on an object in the wrong state (normalized vs physical
// fields, backward before forward, missing patch outputs).
struct StateError : Error {
    using Error::Error;
};

// Unreadable or syntactically malformed file.
struct ParseError : Error {
    using Error::Error;
};

// File parsed but its contents are inconsistent (header/payload mismatch).
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
    using Error::Error;
};

// Non-finite values produced by a numeric procedure. Carries the step at
// which the failure was detected (-1 when not step-indexed).
struct NumericError : Error {
    explicit NumericError(const std::string& msg, long step_index = -1)
        : Error(msg), step(step_index) {}
    long step;
};

// Training diverged (non-finite loss or parameters).
struct TrainingError : NumericError {
    using NumericError::NumericError;
};

}  // namespace wassdiff
