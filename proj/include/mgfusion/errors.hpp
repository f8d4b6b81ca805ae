#pragma once

#include <stdexcept>
#include <string>

namespace mgfusion {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible array shapes handed to a differentiable primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or precondition violated by caller-supplied settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (node tables, CSV content).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed fits, or a broken gradient check.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// File-system level failure (missing file, unwritable directory).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mgfusion
