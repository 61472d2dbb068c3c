#pragma once

#include "tpr/core.hpp"
#include "tpr/innovations.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace tpr {

/// How the time-t autoregressive coefficient is formed from c and the
/// perturbation s_t = <phi, u_phi_t>.
enum class CoefficientForm {
    ExactExponential,  ///< rho_t = exp(c/n + s_t/sqrt(n))
    ExpandedQuadratic  ///< rho_t = 1 + c/n + s_t/sqrt(n) + s_t^2/(2n)
};

enum class InitialCondition {
    Zero,  ///< x_0 = 0
    Given  ///< x_0 = PersistenceSpec::x0
};

struct PersistenceSpec {
    Vector c = Vector::Zero(1);    ///< localizing coefficients, one per regressor
    Vector phi = Vector::Zero(1);  ///< loading of the perturbation shocks
    CoefficientForm form = CoefficientForm::ExactExponential;
    InitialCondition initial = InitialCondition::Zero;
    Vector x0;  ///< used when initial == Given

    Index p() const noexcept { return c.size(); }
    Index d() const noexcept { return phi.size(); }
};

/// Realized coefficient for one period and one regressor.
double realized_coefficient(CoefficientForm form, double c, double perturbation, Index n) noexcept;

/// Simulated regressor path x_0..x_n plus everything needed to audit it.
struct RegressorPath {
    Matrix x;    ///< (n+1) x p, row t is x_t
    Matrix rho;  ///< n x p, row t-1 is the coefficient applied at period t
    PersistenceSpec spec;
    std::shared_ptr<const InnovationPanel> innovations;

    Index n() const noexcept { return rho.rows(); }
    Index p() const noexcept { return x.cols(); }
    /// u_phi rows for periods 1..n.
    auto u_phi() const { return innovations->u_phi().topRows(n()); }
    auto u_x() const { return innovations->u_x().topRows(n()); }
};

/// Runs x_t = rho_t o x_{t-1} + u_xt over t = 1..n using the first n rows
/// of the panel. Throws DimensionMismatch or OverflowDetected.
RegressorPath gen_regressor_path(const PersistenceSpec& spec, std::shared_ptr<const InnovationPanel> panel,
                                 Index n);

/// Aligned estimation sample: row t-1 carries (y_t, x_{t-1}, q_{t-1}).
struct Sample {
    Vector y;
    Matrix x_lag;
    Vector q_lag;
    bool has_intercept = true;

    Index n() const noexcept { return y.size(); }
    Index p() const noexcept { return x_lag.cols(); }
    void validate() const;
};

enum class ThresholdDistribution { StandardNormal, Uniform01 };

/// Threshold predictive regression
///   y_t = alpha_i + beta_i' x_{t-1} + u_yt,  regime 1 iff q_{t-1} <= gamma0.
/// Regime-1 slope is either given directly or as beta2 + delta0 * n^{-tau}.
struct ThresholdDgpSpec {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    Vector beta1 = Vector::Zero(1);
    Vector beta2 = Vector::Zero(1);
    std::optional<Vector> delta0;  ///< diminishing form when set
    double tau = 0.0;
    double gamma0 = 0.25;
    ThresholdDistribution threshold_dist = ThresholdDistribution::StandardNormal;
    bool has_intercept = true;

    /// Regime slopes evaluated at sample size n.
    std::pair<Vector, Vector> slopes(Index n) const;

    /// Monte Carlo design: slope 2/n^0.25 on every regressor in regime 1,
    /// zero in regime 2, gamma0 = 0.25, q ~ N(0,1), zero intercepts.
    static ThresholdDgpSpec standard_design(Index p = 2);
    /// No threshold and no predictability.
    static ThresholdDgpSpec null_model(Index p = 1);
};

/// Combines a regressor path, threshold draws and y-innovations into a sample.
/// `u_y` has n entries, `q` has at least n entries (q_0..q_{n-1} used).
Sample assemble_threshold_sample(const ThresholdDgpSpec& dgp, const RegressorPath& path,
                                 const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& u_y);

/// Everything one replication produces; the path is kept for IVX correction
/// terms and persistence fitting.
struct SimulatedSample {
    Sample sample;
    RegressorPath path;
    Vector q;  ///< q_0..q_n
};

SimulatedSample simulate_threshold_sample(const ThresholdDgpSpec& dgp, const PersistenceSpec& pers,
                                          const CovarianceSpec& cov, Index n, std::uint64_t seed,
                                          std::uint64_t replication = 0);

/// Sample-only convenience wrapper. Requires n >= 20.
Sample gen_threshold_sample(const ThresholdDgpSpec& dgp, const PersistenceSpec& pers, const CovarianceSpec& cov,
                            Index n, std::uint64_t seed, std::uint64_t replication = 0);

/// Threshold draws q_0..q_{count-1}.
Vector draw_threshold_variable(ThresholdDistribution dist, Index count, std::uint64_t seed,
                               std::uint64_t replication = 0);

/// Density of the threshold distribution at gamma.
double threshold_density(ThresholdDistribution dist, double gamma) noexcept;

}  // namespace tpr
