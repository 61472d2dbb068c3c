#include "tpr/core.hpp"

namespace tpr {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::InvalidSampleSize: return "InvalidSampleSize";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::OverflowDetected: return "OverflowDetected";
        case ErrorKind::EmptyRegime: return "EmptyRegime";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::DegenerateThresholdVariable: return "DegenerateThresholdVariable";
        case ErrorKind::InvalidGrid: return "InvalidGrid";
        case ErrorKind::MaxIterationsExceeded: return "MaxIterationsExceeded";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::MissingExogenousDraws: return "MissingExogenousDraws";
        case ErrorKind::NearSingularInstrumentGram: return "NearSingularInstrumentGram";
        case ErrorKind::SingularLimitGram: return "SingularLimitGram";
        case ErrorKind::ArgmaxAtBoundary: return "ArgmaxAtBoundary";
        case ErrorKind::MissingCriticalValues: return "MissingCriticalValues";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
        case ErrorKind::TooManyFailures: return "TooManyFailures";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::TooFewRows: return "TooFewRows";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::ConfigInvalid:
        case ErrorKind::InvalidGrid:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::InvalidSampleSize:
        case ErrorKind::NotPositiveDefinite:
            return ErrorCategory::Config;
        case ErrorKind::MissingColumn:
        case ErrorKind::ParseError:
        case ErrorKind::TooFewRows:
        case ErrorKind::IoError:
        case ErrorKind::DegenerateThresholdVariable:
        case ErrorKind::MissingExogenousDraws:
            return ErrorCategory::Data;
        case ErrorKind::MissingCriticalValues:
            return ErrorCategory::MissingCriticalValues;
        default:
            return ErrorCategory::Numerical;
    }
}

}  // namespace tpr
