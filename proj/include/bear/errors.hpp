#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bear {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor extents or ranks that do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed configuration, unknown keys, invalid hyperparameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Unusable input data (empty datasets, unreadable images, malformed CSV).
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf in losses or gradients.
class NumericError : public Error {
public:
    using Error::Error;
};

// Binary file decoding failure; carries the byte offset where decoding stopped.
class FormatError : public DataError {
public:
    FormatError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace bear
