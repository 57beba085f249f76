#pragma once

#include <stdexcept>
#include <string>

namespace cyclight {

/// Base of every error raised by the library. Domain errors map to CLI exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the documented domain (bit length, identifier, ...).
class OutOfRangeError : public Error {
public:
    using Error::Error;
};

/// Geometry that admits no unique pose (coplanar points, coincident pair).
class DegenerateConfigurationError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Intensity window without any transition; bits cannot be separated.
class NoTransitionError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (code-book JSON, trace CSV, scenario).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid scenario configuration. `field()` names the offending JSON path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace cyclight
