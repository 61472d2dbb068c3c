#pragma once

#include "tpr/core.hpp"

#include <cstdint>

namespace tpr {

/// Covariance of the innovation vector (u_y, u_x', u_phi')'.
///
/// The diagonal blocks describe the predictive-regression error, the
/// regressor innovations and the persistence-perturbation shocks. The two
/// cross blocks are optional and default to zero; `cross_xy` is the
/// endogeneity channel between u_x and u_y.
struct CovarianceSpec {
    double sigma_y = 1.0;
    Matrix sigma_xx = Matrix::Identity(1, 1);
    Matrix sigma_phiphi = Matrix::Identity(1, 1);
    Vector cross_xy = Vector::Zero(1);
    Matrix cross_xphi = Matrix::Zero(1, 1);

    Index p() const noexcept { return sigma_xx.rows(); }
    Index d() const noexcept { return sigma_phiphi.rows(); }
    Index width() const noexcept { return 1 + p() + d(); }

    /// Unit variances and zero cross blocks.
    static CovarianceSpec identity(Index p, Index d);
    /// Unit variances with a common correlation `rho` between u_y and every u_x.
    static CovarianceSpec with_endogeneity(Index p, Index d, double rho);
};

/// n draws of the innovation vector; row t-1 holds xi_t.
struct InnovationPanel {
    Matrix draws;
    Index p = 0;
    Index d = 0;
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;

    Index n() const noexcept { return draws.rows(); }
    auto u_y() const { return draws.col(0); }
    auto u_x() const { return draws.middleCols(1, p); }
    auto u_phi() const { return draws.middleCols(1 + p, d); }
};

/// Full (1+p+d) square covariance. Throws NotPositiveDefinite when the
/// assembled matrix has no Cholesky factor, DimensionMismatch on bad blocks.
Matrix assemble_covariance(const CovarianceSpec& spec);

/// Lower Cholesky factor of the assembled covariance.
Matrix covariance_factor(const CovarianceSpec& spec);

/// i.i.d. Gaussian rows with the assembled covariance. Row t is a pure
/// function of (seed, replication, t), so panels are reproducible under any
/// evaluation order.
InnovationPanel draw_innovations(const CovarianceSpec& spec, Index n, std::uint64_t seed,
                                 std::uint64_t replication = 0);

}  // namespace tpr
