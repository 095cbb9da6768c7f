#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prefx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Not enough data for the requested partitioning.
class SizingError : public Error {
public:
    SizingError(const std::string& what, std::size_t available)
        : Error(what + " (available: " + std::to_string(available) + ")"),
          available_(available) {}
    std::size_t available() const noexcept { return available_; }

private:
    std::size_t available_;
};

class TransportError : public Error {
public:
    using Error::Error;
};

/// Carries the raw model output so callers can persist it for audit.
class ExtractionError : public Error {
public:
    ExtractionError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// No hyperparameter configuration could be selected.
class SelectionError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A required input is missing or does not match the artifact built from it.
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace prefx
