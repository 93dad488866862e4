#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace monorisk {

// Malformed record in a line-delimited stream or a config document.
// line is 1-based; 0 means "not tied to a particular line".
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& message, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Contract violation on an otherwise well-formed stream
// (non-monotone timestamps, frames delivered out of order).
class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration value or combination of values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Geometric precondition violation: box bottom at or above the horizon,
// vehicle at or behind the camera plane, parallel line bundle.
class GeometryError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace monorisk
