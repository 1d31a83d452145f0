#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmpstomo {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    DegenerateSpectrum,
    IllConditionedBasis,
    NoPrincipalRoot,
    SingularR,
    NotNormalized,
    OddOrderUnavailable,
    SimplexViolation,
    MalformedFile,
    NonPsdKernel,
    OrderTooHigh,
    InfeasibleInitializer,
    Divergence,
    FitFailed,
    CostGuard,
    IoError,
};

std::string_view to_string(ErrorKind kind);

// Process exit code used by the CLI for a given error class:
// 2 validation, 3 fit failure, 4 I/O.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace cmpstomo
