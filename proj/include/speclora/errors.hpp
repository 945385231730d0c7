#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace speclora {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input outside an operation's mathematical domain (non-finite data, zero vector, empty spectrum).
class DomainError : public Error {
public:
    using Error::Error;
};

// Configuration rejected against the shape it is applied to.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Iterative or training computation failed numerically.
class NumericError : public Error {
public:
    NumericError(const std::string& what, double residual, std::int64_t step = -1)
        : Error(what), residual_(residual), step_(step) {}

    double residual() const noexcept { return residual_; }
    // Optimizer step at which divergence was detected, -1 when not applicable.
    std::int64_t step() const noexcept { return step_; }

private:
    double residual_;
    std::int64_t step_;
};

// Filesystem failure, message carries the OS error text.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed tensor header or manifest.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Tensor payload contains a non-finite value.
class DataError : public Error {
public:
    DataError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// File size disagrees with the header.
class LengthError : public Error {
public:
    LengthError(const std::string& what, std::uint64_t expected, std::uint64_t actual)
        : Error(what), expected_(expected), actual_(actual) {}
    std::uint64_t expected() const noexcept { return expected_; }
    std::uint64_t actual() const noexcept { return actual_; }

private:
    std::uint64_t expected_;
    std::uint64_t actual_;
};

}  // namespace speclora
