#include "cmpstomo/error.hpp"

namespace cmpstomo {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
        case ErrorKind::IllConditionedBasis: return "IllConditionedBasis";
        case ErrorKind::NoPrincipalRoot: return "NoPrincipalRoot";
        case ErrorKind::SingularR: return "SingularR";
        case ErrorKind::NotNormalized: return "NotNormalized";
        case ErrorKind::OddOrderUnavailable: return "OddOrderUnavailable";
        case ErrorKind::SimplexViolation: return "SimplexViolation";
        case ErrorKind::MalformedFile: return "MalformedFile";
        case ErrorKind::NonPsdKernel: return "NonPsdKernel";
        case ErrorKind::OrderTooHigh: return "OrderTooHigh";
        case ErrorKind::InfeasibleInitializer: return "InfeasibleInitializer";
        case ErrorKind::Divergence: return "Divergence";
        case ErrorKind::FitFailed: return "FitFailed";
        case ErrorKind::CostGuard: return "CostGuard";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::OrderTooHigh:
        case ErrorKind::InfeasibleInitializer:
        case ErrorKind::Divergence:
        case ErrorKind::FitFailed:
            return 3;
        case ErrorKind::MalformedFile:
        case ErrorKind::IoError:
            return 4;
        default:
            return 2;
    }
}

}  // namespace cmpstomo
