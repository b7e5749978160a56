#pragma once

#include <stdexcept>
#include <string>

namespace uvoc {

enum class ErrorKind {
    DegenerateVoltage,
    NonFinite,
    InvalidArgument,
    Infeasible,
    NonConvergence,
    PoleEvaluation,
    Schema,
    Io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` tells callers (and the CLI
/// exit-code mapping) what went wrong.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string context = {})
        : std::runtime_error(message), kind_(kind), context_(std::move(context)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& context() const noexcept { return context_; }

private:
    ErrorKind kind_;
    std::string context_;
};

}  // namespace uvoc
