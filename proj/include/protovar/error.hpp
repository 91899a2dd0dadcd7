#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protovar {

// Malformed or invalid input data (CLI exit 1).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Too few defined observations for a statistic (CLI exit 2).
class InsufficientObservations : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File system failure (CLI exit 3).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace protovar
