#pragma once

#include <stdexcept>
#include <string>

namespace aide {

/// Tensor shapes incompatible with the requested operation.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operation invoked in an invalid engine state (e.g. backward before forward).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Input data violates a documented precondition (range, count, ...).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Configuration values that cannot produce a runnable object.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// File / serialization failures. `kind` distinguishes load error classes.
struct IoError : std::runtime_error {
    enum class Kind { generic, magic, version, shape_table, truncated, checksum };
    Kind kind = Kind::generic;
    IoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed response from a remote service.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required (gradients, losses).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace aide
