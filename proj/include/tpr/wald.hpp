#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"
#include "tpr/estimate.hpp"
#include "tpr/ivx.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace tpr {

enum class HypothesisKind {
    LinearityOnly,                 ///< eta = 0: no intercept shift and no slope shift
    JointLinearityPredictability,  ///< eta = 0 and beta = 0
    RegimeSlopesZero               ///< beta_1 = beta_2 = 0, regime intercepts free
};

enum class Estimator { OLS, IVX };

std::string_view to_string(HypothesisKind kind) noexcept;
std::string_view to_string(Estimator e) noexcept;
HypothesisKind parse_hypothesis(std::string_view text);
Estimator parse_estimator(std::string_view text);

/// Linear restriction R theta = r on the coefficient vector of the chosen
/// estimator. For OLS theta follows `param` (BaseDelta for the linearity and
/// joint hypotheses, TwoRegime for regime slopes); for IVX theta is
/// (beta_1', beta_2')' because intercepts are partialled out regime-wise, so
/// an intercept shift is not part of the IVX restriction.
struct Hypothesis {
    HypothesisKind kind = HypothesisKind::LinearityOnly;
    Estimator estimator = Estimator::OLS;
    Parameterization param = Parameterization::BaseDelta;
    Matrix R;
    Vector r;
    std::vector<Index> restricted;  ///< OLS: excluded design columns

    Index dof() const noexcept { return R.rows(); }
};

Hypothesis make_hypothesis(HypothesisKind kind, Estimator estimator, Index p, bool has_intercept);

/// Pointwise Wald statistic by OLS: eta' [X_r'(I - P_f) X_r] eta / sigma2,
/// X_r the restricted columns, P_f the projection on the free ones and
/// sigma2 = SSR/n of the unrestricted two-regime fit.
double wald_ols(const Sample& s, double gamma, HypothesisKind kind);

/// Pointwise Wald statistic by IVX: (R b)' [R V R']^{-1} (R b).
double wald_ivx(const Sample& s, double gamma, HypothesisKind kind, const Eigen::Ref<const Matrix>& instrument);
inline double wald_ivx(const Sample& s, double gamma, HypothesisKind kind, const IvxConfig& cfg) {
    return wald_ivx(s, gamma, kind, sample_instrument(s, cfg));
}

struct WaldCurve {
    Vector gammas;
    Vector values;
    double sup_stat = 0.0;
    double argmax_gamma = 0.0;
    Index dof = 0;
    Estimator estimator = Estimator::OLS;
    HypothesisKind hypothesis = HypothesisKind::LinearityOnly;
    std::vector<double> skipped;  ///< grid points dropped for empty regimes
};

/// Wald statistic at every grid point, computed from cumulative regime
/// moments over the q-sorted sample. For IVX the instrument defaults to the
/// standard filter of the sample regressors.
WaldCurve sup_wald(const Sample& s, const ThresholdGrid& grid, HypothesisKind kind, Estimator estimator,
                   const IvxConfig& cfg = {}, const std::optional<Matrix>& instrument = std::nullopt);

/// Same curve from independent pointwise fits (slow path).
WaldCurve sup_wald_pointwise(const Sample& s, const ThresholdGrid& grid, HypothesisKind kind, Estimator estimator,
                             const IvxConfig& cfg = {}, const std::optional<Matrix>& instrument = std::nullopt);

struct EstimatedThresholdWald {
    double statistic = 0.0;
    double gamma_hat = 0.0;
    Index dof = 0;
    Estimator estimator = Estimator::OLS;
};

/// Tests beta_1 = beta_2 = 0 at a threshold estimated under that null: the
/// intercept-only SSR argmin when the model has regime intercepts, the full
/// two-regime SSR argmin otherwise (the restricted model then has no
/// threshold to estimate).
EstimatedThresholdWald wald_at_estimated_threshold(const Sample& s, const ThresholdGrid& grid, Estimator estimator,
                                                   const IvxConfig& cfg = {},
                                                   const std::optional<Matrix>& instrument = std::nullopt);

}  // namespace tpr
