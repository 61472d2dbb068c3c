#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tpr {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Index = Eigen::Index;

/// Named failure conditions raised by the library.
enum class ErrorKind {
    NotPositiveDefinite,
    InvalidSampleSize,
    DimensionMismatch,
    OverflowDetected,
    EmptyRegime,
    RankDeficient,
    DegenerateThresholdVariable,
    InvalidGrid,
    MaxIterationsExceeded,
    InvalidConfig,
    MissingExogenousDraws,
    NearSingularInstrumentGram,
    SingularLimitGram,
    ArgmaxAtBoundary,
    MissingCriticalValues,
    ConfigInvalid,
    TooManyFailures,
    MissingColumn,
    ParseError,
    TooFewRows,
    IoError,
};

/// Coarse grouping used by the CLI to pick an exit status.
enum class ErrorCategory { Config, Data, Numerical, MissingCriticalValues };

std::string_view to_string(ErrorKind kind) noexcept;
ErrorCategory category_of(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_of(kind_); }

private:
    ErrorKind kind_;
};

/// Relative difference with an absolute floor, |a-b| / max(|a|, |b|, floor).
inline double rel_diff(double a, double b, double floor = 1e-300) {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / scale;
}

}  // namespace tpr
