#pragma once

#include <stdexcept>
#include <string>

namespace spillover {

// Base for every recoverable data-side failure raised by the library. Contract
// violations by the caller (bad arguments) use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class DuplicateKeyError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class SingularSystemError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class DegenerateSeriesError : public Error {
public:
    using Error::Error;
};

// Raised for invalid generator specifications (e.g. a non-stationary VAR).
class SpecError : public Error {
public:
    using Error::Error;
};

}  // namespace spillover
