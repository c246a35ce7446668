#pragma once

#include <stdexcept>
#include <string>

namespace usod {

/// Malformed tensors, shapes or files handed to a library call.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values or schemes (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation was called in a state it does not support.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Training produced a NaN/Inf loss (CLI exit code 3).
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace usod
