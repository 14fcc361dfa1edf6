#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sqm {

enum class ErrorKind {
    argument,
    dimension,
    format,
    data,
    config,
    contract,
    training,
    usage,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every error thrown by the library. The kind selects the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& m) : Error(ErrorKind::argument, m) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& m) : Error(ErrorKind::dimension, m) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& m) : Error(ErrorKind::data, m) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& m) : Error(ErrorKind::contract, m) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& m) : Error(ErrorKind::training, m) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& m) : Error(ErrorKind::usage, m) {}
};

/// Malformed input file. `line` is 1-based, 0 when the error is not tied to a line.
class FormatError : public Error {
public:
    FormatError(const std::string& source, std::size_t line, const std::string& m);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Exit code convention of the command line tool.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace sqm
