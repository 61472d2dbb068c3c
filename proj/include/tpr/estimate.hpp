#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"

#include <vector>

namespace tpr {

/// Candidate thresholds: distinct order statistics of q between the
/// trimming quantiles, keeping only points where both regimes hold at
/// least `min_regime` observations.
struct ThresholdGrid {
    double pi1 = 0.15;
    double pi2 = 0.85;
    Index min_regime = 10;
    Vector points;

    Index size() const noexcept { return points.size(); }
};

inline constexpr double kDefaultTrimLower = 0.15;
inline constexpr double kDefaultTrimUpper = 0.85;
/// Reciprocal condition number (of the column-equilibrated Gram matrix)
/// below which a design is treated as singular.
inline constexpr double kRankTolerance = 1e-12;

ThresholdGrid make_grid(const Eigen::Ref<const Vector>& q, Index p, double pi1 = kDefaultTrimLower,
                        double pi2 = kDefaultTrimUpper);
inline ThresholdGrid make_grid(const Sample& s, double pi1 = kDefaultTrimLower, double pi2 = kDefaultTrimUpper) {
    return make_grid(s.q_lag, s.p(), pi1, pi2);
}

enum class Parameterization {
    TwoRegime,  ///< [I1, x'I1, I2, x'I2]  (intercept columns only with an intercept)
    BaseDelta   ///< [1, x', I1, x'I1]
};

/// Regime-1 indicator I(q_{t-1} <= gamma).
Eigen::Array<bool, Eigen::Dynamic, 1> regime_indicator(const Sample& s, double gamma);

/// Throws EmptyRegime when either regime has fewer than p+1 rows.
Matrix build_design(const Sample& s, double gamma, Parameterization param = Parameterization::TwoRegime);

struct LeastSquaresFit {
    Vector theta;
    Vector residuals;
    double ssr = 0.0;
};

/// Least squares of y on X. Throws RankDeficient when the equilibrated
/// Gram matrix has reciprocal condition number below kRankTolerance.
LeastSquaresFit least_squares(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y);

/// OLS at a fixed threshold.
LeastSquaresFit ols_fit(const Sample& s, double gamma, Parameterization param = Parameterization::TwoRegime);

/// Concentrated SSR at every grid point.
Vector ssr_profile(const Sample& s, const ThresholdGrid& grid);

struct ThresholdFit {
    double gamma_hat = 0.0;
    Index gamma_index = 0;
    Vector theta_hat;  ///< TwoRegime ordering
    Vector ssr_curve;
    double ssr = 0.0;
    double sigma2_hat = 0.0;
    ThresholdGrid grid;
};

/// gamma_hat = grid argmin of SSR (smallest gamma on ties), refit at gamma_hat.
ThresholdFit estimate_threshold(const Sample& s, const ThresholdGrid& grid);

/// Grid argmin (smallest gamma on ties) of the SSR of y on the two regime
/// intercepts alone, i.e. the threshold fit with every slope restricted to zero.
double intercept_threshold(const Sample& s, const ThresholdGrid& grid);
inline ThresholdFit estimate_threshold(const Sample& s) { return estimate_threshold(s, make_grid(s)); }

namespace detail {

/// Observations sorted by q together with the regime-1 count at each grid point.
struct SortedSample {
    std::vector<Index> order;       ///< permutation sorting q ascending (stable)
    std::vector<Index> split;       ///< regime-1 size for each grid point
};
SortedSample sort_for_grid(const Sample& s, const ThresholdGrid& grid);

/// Solves G theta = b for symmetric positive semi-definite G after
/// diagonal equilibration. Returns false if rcond < kRankTolerance.
bool solve_spd(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Vector>& b, Vector& theta);
bool solve_spd(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Matrix>& B, Matrix& out);

/// Base regressor row (1, x') or x'.
Matrix base_regressors(const Sample& s);

}  // namespace detail

}  // namespace tpr
