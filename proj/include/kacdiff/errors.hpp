#pragma once

#include <stdexcept>
#include <string>

namespace kacdiff {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A coefficient or argument left the domain where the operation is defined
/// (vanishing sigma, point outside a kernel interval, p >= q - 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An adaptive quadrature ran out of its subdivision budget.
class QuadratureFailure : public Error {
public:
    using Error::Error;
};

/// A tabulated curve was evaluated outside its grid, or grid refinement did
/// not reach the requested tolerance.
class InterpolationError : public Error {
public:
    using Error::Error;
};

/// Recurrence could not be decided at the requested probe limit.
class Inconclusive : public Error {
public:
    using Error::Error;
};

class NotPositiveRecurrent : public Error {
public:
    using Error::Error;
};

/// Parameters outside the admissible range of a closed-form bound.
class RangeError : public Error {
public:
    using Error::Error;
};

class InconsistentParams : public Error {
public:
    using Error::Error;
};

/// A deviation constant was requested without one of its moment inputs.
class MissingMoments : public Error {
public:
    using Error::Error;
};

/// A simulated path left the guard interval.
class NumericalBlowup : public Error {
public:
    using Error::Error;
};

class ExcessCensoring : public Error {
public:
    using Error::Error;
};

class InsufficientCycles : public Error {
public:
    using Error::Error;
};

/// Malformed expression or config text. Line and column are 1-based; zero
/// means unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line, int column)
        : Error(format(what, line, column)), line_(line), column_(column), message_(what) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }

private:
    static std::string format(const std::string& what, int line, int column) {
        std::string out;
        if (line > 0) out += "line " + std::to_string(line) + ", ";
        if (column > 0) out += "column " + std::to_string(column) + ": ";
        return out + what;
    }

    int line_;
    int column_;
    std::string message_;
};

/// Semantic problems in an experiment config (missing keys, empty grids).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace kacdiff
