#pragma once

#include <stdexcept>
#include <string>

namespace dialscm {

// Bad inputs: malformed configs, index ranges, shape mismatches. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Graph-level violations: cycles, non-DAG weight patterns.
class StructuralError : public ValidationError {
public:
    explicit StructuralError(const std::string& msg) : ValidationError(msg) {}
};

// Numeric failures: singular matrices, rank deficiency, divergence. CLI exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dialscm
