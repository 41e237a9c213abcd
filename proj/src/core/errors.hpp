#pragma once

#include <stdexcept>
#include <string>

namespace m2d2 {

enum class ErrorKind {
    invalid_argument,  // bad user input: config fields, CLI flags, malformed spec
    shape,             // tensor shape conformance failure
    decomposition,     // Cholesky pivot failure (matrix not SPD)
    format,            // file format violation (magic, version, truncation)
    config,            // semantic config violation
    io,                // filesystem failure
    undefined_metric,  // metric not defined on the given data (e.g. single-class)
    runtime,           // anything else
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

// Cholesky failure; carries the index of the non-positive pivot.
class DecompositionError : public Error {
public:
    DecompositionError(std::size_t pivot_index, double pivot_value)
        : Error(ErrorKind::decomposition,
                "matrix not positive definite: pivot " + std::to_string(pivot_index) +
                    " = " + std::to_string(pivot_value)),
          pivot_index_(pivot_index) {}

    std::size_t pivot_index() const { return pivot_index_; }

private:
    std::size_t pivot_index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

}  // namespace m2d2
