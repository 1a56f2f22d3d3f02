#pragma once

#include <stdexcept>
#include <string>

namespace gladcf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad k, empty sweep, unknown variant...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened or read.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file content. Carries the 1-based line number when known.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A graph or tensor does not fit the shape it is being placed into.
class SizeError : public Error {
public:
    using Error::Error;
};

/// Optimisation produced non-finite values.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given input (e.g. AUC with one class).
class MetricError : public Error {
public:
    using Error::Error;
};

}  // namespace gladcf
