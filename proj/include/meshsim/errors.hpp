#pragma once

#include <stdexcept>
#include <string>

namespace meshsim {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix shapes or mode indices that do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A scalar argument outside its mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input too large for an exact algorithm.
class SizeError : public Error {
public:
    using Error::Error;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

/// Incomplete or inconsistent phase program.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input violates an operation's precondition (e.g. a non-unitary target).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// An algorithm failed to reach its numerical tolerance.
class NumericalError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Data that carries no usable signal (zero columns, flat plateaus).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Input that cannot be parsed into a domain type.
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace meshsim
