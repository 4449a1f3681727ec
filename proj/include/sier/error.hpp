#pragma once

#include <stdexcept>
#include <string>

namespace sier {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments, out-of-range parameters, shape mismatches.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Unusable input data: unparsable files, degenerate designs.
class DataError : public Error {
public:
    using Error::Error;
};

/// A numerical kernel failed (no convergence, indefinite matrix, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace sier
