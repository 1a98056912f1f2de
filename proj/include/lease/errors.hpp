#pragma once

#include <stdexcept>
#include <string>

namespace lease {

// Invalid configuration or malformed input files. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape violations, named after the offending op.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required. CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IdxError : std::runtime_error {
    explicit IdxError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IdxBadMagicError : IdxError {
    explicit IdxBadMagicError(const std::string& msg) : IdxError(msg) {}
};
struct IdxTruncatedError : IdxError {
    explicit IdxTruncatedError(const std::string& msg) : IdxError(msg) {}
};
struct IdxCountMismatchError : IdxError {
    explicit IdxCountMismatchError(const std::string& msg) : IdxError(msg) {}
};

}  // namespace lease
