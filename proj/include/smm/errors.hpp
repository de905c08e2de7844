#pragma once

#include <stdexcept>
#include <string>

namespace smm {

// Base of every error the library throws. `what()` always names the operation.
class Error : public std::runtime_error {
public:
    Error(std::string op, const std::string& message)
        : std::runtime_error(op + ": " + message), op_(std::move(op)) {}

    const std::string& op() const noexcept { return op_; }

private:
    std::string op_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

class TapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace smm
