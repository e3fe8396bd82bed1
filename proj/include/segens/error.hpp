#pragma once

#include <stdexcept>
#include <string>

namespace segens {

// Error hierarchy shared by the library and the CLI. The CLI maps these to
// its exit-code contract: UsageError -> 1, ValidationError (and subclasses)
// -> 2, anything else -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

// Malformed file content (header keys, unparsable values).
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// Payload shorter or longer than the header promises.
struct TruncationError : ParseError {
    using ParseError::ParseError;
};

// Inputs that carry no usable signal (e.g. all STAPLE raters empty).
struct DegenerateInputError : ValidationError {
    using ValidationError::ValidationError;
};

// A surface-distance operation was asked to use an empty structure.
struct EmptyStructureError : ValidationError {
    using ValidationError::ValidationError;
};

struct IoError : ValidationError {
    using ValidationError::ValidationError;
};

} // namespace segens
