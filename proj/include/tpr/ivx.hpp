#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"

#include <cmath>
#include <cstdint>

namespace tpr {

/// Mildly integrated filter rho_z = 1 - c_z / n^gamma_z.
struct IvxConfig {
    double c_z = 1.0;
    double gamma_z = 0.95;

    /// Throws InvalidConfig unless c_z > 0 and 0 < gamma_z < 1.
    void validate() const;
};

double instrument_coefficient(Index n, const IvxConfig& cfg);

/// z_t = rho_z z_{t-1} + (x_t - x_{t-1}), z_0 = 0, applied column-wise to a
/// series whose rows are time. `n` sets rho_z (defaults to the row count).
template <typename Derived>
MatrixX<typename Derived::Scalar> build_instrument(const Eigen::MatrixBase<Derived>& x, const IvxConfig& cfg,
                                                   Index n = -1) {
    using Scalar = typename Derived::Scalar;
    cfg.validate();
    if (x.rows() < 2) throw Error(ErrorKind::InvalidSampleSize, "instrument needs at least two observations");
    const Scalar rho = static_cast<Scalar>(instrument_coefficient(n > 0 ? n : x.rows(), cfg));
    MatrixX<Scalar> z(x.rows(), x.cols());
    z.row(0).setZero();
    for (Index t = 1; t < x.rows(); ++t) z.row(t) = rho * z.row(t - 1) + (x.row(t) - x.row(t - 1));
    return z;
}

/// Instrument with the stochastic-unit-root correction terms, indexed
/// m = 0..n along the regressor path:
///   z~_m = z_m + (C/n) eta1_m + n^{-1/2} eta2_m + (2n)^{-1} eta3_m,
///   etak_m = sum_{j=1}^{m} rho_z^{m-j} w_j x_{j-1},  w_j = 1, s_j, s_j^2,
/// with s_j = <phi, u_phi_j>.
struct CorrectedInstrument {
    Matrix z;
    Matrix eta1;
    Matrix eta2;
    Matrix eta3;
    Matrix z_tilde;
};

/// Throws MissingExogenousDraws when the path carries no innovation panel.
CorrectedInstrument build_corrected_instrument(const RegressorPath& path, const IvxConfig& cfg);

/// Instrument rows aligned with a Sample built from `path` (rows 0..n-1).
Matrix corrected_sample_instrument(const RegressorPath& path, const IvxConfig& cfg);

/// Standard instrument aligned with the sample rows.
inline Matrix sample_instrument(const Sample& s, const IvxConfig& cfg) {
    return build_instrument(s.x_lag, cfg, s.n());
}

struct IvxFit {
    Vector beta;   ///< (beta_1', beta_2')'
    Vector alpha;  ///< regime intercepts (empty without intercept)
    Matrix avar;   ///< 2p x 2p, block diagonal
    Matrix z_path; ///< instrument rows aligned with the sample
    double sigma2 = 0.0;
    bool corrected = false;
};

/// Regime-wise IV estimator: within each regime the response and regressors
/// are demeaned (when the sample has an intercept) and instrumented by the
/// raw instrument. avar = sigma2 * A^{-1} (Z'MZ) A^{-T} per regime, with
/// A = Z'MX and M the within-regime demeaning; sigma2 comes from the
/// unrestricted two-regime OLS fit at gamma.
/// Throws EmptyRegime or NearSingularInstrumentGram.
IvxFit ivx_fit(const Sample& s, double gamma, const Eigen::Ref<const Matrix>& instrument, bool corrected = false);
inline IvxFit ivx_fit(const Sample& s, double gamma, const IvxConfig& cfg) {
    return ivx_fit(s, gamma, sample_instrument(s, cfg), false);
}
IvxFit ivx_fit(const SimulatedSample& sim, double gamma, const IvxConfig& cfg, bool corrected);

/// Draws from the N(0, phi' Omega phi / (2 c_z)) limit of the filtered
/// perturbation sum.
Vector simulate_znphi_limit(const IvxConfig& cfg, const Eigen::Ref<const Vector>& phi,
                            const Eigen::Ref<const Matrix>& omega_phiphi, Index draws, std::uint64_t seed);

/// Finite-n analogue: draws of n^{-gamma_z/2} sum_{j=1}^n phi'u_j rho_z^{n-j}
/// with Gaussian u_j ~ N(0, Omega).
Vector simulate_znphi_finite(Index n, const IvxConfig& cfg, const Eigen::Ref<const Vector>& phi,
                             const Eigen::Ref<const Matrix>& omega_phiphi, Index draws, std::uint64_t seed);

/// Exact variance of the finite-n quantity above.
double znphi_finite_variance(Index n, const IvxConfig& cfg, double phi_omega_phi);

}  // namespace tpr
