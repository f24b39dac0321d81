#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridsec {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed case or measurement text. Line and column are 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line, std::size_t column)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Well-formed input that describes an invalid model (dangling ids, islands, ...).
class SemanticError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NotObservable : public Error {
public:
    using Error::Error;
};

class Diverged : public Error {
public:
    using Error::Error;
};

/// The requested stealthy attack does not exist (alpha_k is infinite).
class Infeasible : public Error {
public:
    using Error::Error;
};

/// A caller-side contract was broken (bad argument, violated hypothesis).
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace gridsec
