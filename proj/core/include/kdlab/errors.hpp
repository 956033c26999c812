#pragma once

#include <stdexcept>
#include <string>

namespace kdlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer shape incompatibilities.
struct ShapeError : Error {
    using Error::Error;
};

// Bad argument values (empty sets, out-of-range labels, ...).
struct ValueError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ChecksumError : IoError {
    using IoError::IoError;
};

struct TruncatedFileError : IoError {
    using IoError::IoError;
};

// File was written for a different model spec / dataset layout.
struct SpecMismatchError : IoError {
    using IoError::IoError;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace kdlab
