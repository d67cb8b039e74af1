#pragma once

#include <stdexcept>
#include <string>

namespace aif {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (empty text, bad count, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Tensor or vector shapes that must agree do not.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Probability vectors of the wrong length or off the simplex.
class MalformedDistribution : public Error {
public:
    using Error::Error;
};

/// Configuration keys, values, or derived sizes that are unusable.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File contents that cannot be parsed.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Training produced non-finite values or ran out of order.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace aif
