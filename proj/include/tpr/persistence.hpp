#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"

#include <optional>
#include <vector>

namespace tpr {

/// Box for (c, phi); every phi_j shares the same interval.
struct PersistenceBounds {
    double c_lo = -20.0;
    double c_hi = 20.0;
    double phi_lo = -2.0;
    double phi_hi = 2.0;

    void validate() const;
};

struct PersistenceOptions {
    Index max_iterations = 100;
    double gradient_tol = 1e-8;  ///< on the largest residual-Jacobian cosine
    double step_tol = 1e-12;
    Index grid_c = 41;           ///< coarse fallback lattice
    Index grid_phi = 21;
};

struct PersistenceFit {
    double c_hat = 0.0;
    Vector phi_hat;
    double objective = 0.0;
    bool converged = false;
    Index iterations = 0;
    bool used_grid_fallback = false;
    std::vector<double> trace;  ///< objective after each accepted iterate, starting at init
    std::optional<ErrorKind> warning;  ///< MaxIterationsExceeded when not converged
};

/// sum_t (x_t - exp(c/n + phi'u_phi_t / sqrt(n)) x_{t-1})^2 over t = 1..n,
/// where x holds x_0..x_n and u_phi has n rows. Throws DimensionMismatch.
double nlls_objective(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi, double c,
                      const Eigen::Ref<const Vector>& phi);
double nlls_objective(const RegressorPath& path, double c, const Eigen::Ref<const Vector>& phi, Index column = 0);

/// Damped Gauss-Newton with an analytic Jacobian and projection onto the
/// box. When the iteration stalls away from a stationary point it restarts
/// from the best node of a coarse lattice. Never throws for non-convergence:
/// the best point is returned with converged = false.
PersistenceFit fit_persistence(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi,
                               double c_init, const Eigen::Ref<const Vector>& phi_init,
                               const PersistenceBounds& bounds = {}, const PersistenceOptions& options = {});
PersistenceFit fit_persistence(const RegressorPath& path, double c_init, const Eigen::Ref<const Vector>& phi_init,
                               const PersistenceBounds& bounds = {}, Index column = 0,
                               const PersistenceOptions& options = {});

}  // namespace tpr
