#pragma once

#include <stdexcept>
#include <string>

namespace storplan {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data or parameters violate a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Misuse of the model container (unknown handle, duplicate name, ...).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Inconsistent build options (missing curves, gamma without baseline, ...).
class BuildError : public Error {
public:
    using Error::Error;
};

/// The external solver could not be run or its output could not be read.
class BackendError : public Error {
public:
    using Error::Error;
};

/// A solution did not satisfy a verification check.
class VerificationError : public Error {
public:
    using Error::Error;
};

} // namespace storplan
