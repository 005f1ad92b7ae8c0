#pragma once

#include <stdexcept>
#include <string>

namespace rso {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Input text or a file could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A configuration field or referenced file is invalid.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A gradient, loss or weight became NaN or infinite; the update was not applied.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An expert backend could not produce a usable reply.
class ExpertError : public Error {
public:
    ExpertError(std::string expert, int turn, const std::string& message)
        : Error(expert + " (turn " + std::to_string(turn) + "): " + message),
          expert_(std::move(expert)),
          turn_(turn) {}

    const std::string& expert() const noexcept { return expert_; }
    int turn() const noexcept { return turn_; }

private:
    std::string expert_;
    int turn_;
};

/// Transport-level failure after all retries were spent.
class ExpertUnavailable : public Error {
public:
    ExpertUnavailable(const std::string& message, int attempts)
        : Error(message), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace rso
