#pragma once

#include <stdexcept>
#include <string>

namespace quail {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files (CSV, ledgers, checkpoints, configs).
class ParseError : public Error {
public:
    using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Matrix / vector widths that should agree do not.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Training diverged (non-finite loss or gradient).
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace quail
