#pragma once

#include <stdexcept>
#include <string>

namespace attnbasin {

// Base class for everything the library throws on bad input.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed .atnb bytes: bad magic, unparsable header, trailing data.
class FormatError : public Error {
public:
    using Error::Error;
};

class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

// A value violates a documented invariant (normalization, shape, range).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Arguments are inconsistent with each other or with the operation's preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace attnbasin
