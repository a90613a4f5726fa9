// error.hpp - exception types shared by every blendreg module.
#pragma once

#include <stdexcept>
#include <string>

namespace blendreg {

/// Invalid parameter or configuration value (degenerate range, bad factor, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two inputs that must share a geometry do not.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input data violates an operation's precondition (empty mask, single class, ...).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation has no well-defined answer for the given data.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace blendreg
