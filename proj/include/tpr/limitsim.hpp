#pragma once

#include "tpr/core.hpp"
#include "tpr/innovations.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tpr {

/// Euler mesh on [0,1] and Monte Carlo size for limit simulations.
struct MeshSpec {
    Index steps = 2000;
    Index reps = 10000;
    std::uint64_t seed = 1;

    /// Throws InvalidConfig unless steps >= 100 and reps >= 100.
    void validate() const;
};

/// Discretized G_{c,phi} on the mesh s_k = k/steps, k = 0..steps.
struct GPath {
    Matrix g;     ///< (steps+1) x p
    Matrix bx;    ///< (steps+1) x p, B_x(s_k)
    Matrix bphi;  ///< (steps+1) x d, B_phi(s_k)
    double dt = 0.0;

    Index steps() const noexcept { return g.rows() - 1; }
    /// Left-point Riemann sum of G G' ds.
    Matrix gram() const;
};

/// G_i(s) = exp(s c_i + phi'B_phi(s)) int_0^s exp(-r c_i - phi'B_phi(r)) dB_x,i(r)
/// from given Brownian increments (rows are mesh steps). The stochastic
/// integral is taken at the left point of each step.
GPath g_path_from_increments(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Vector>& phi,
                             const Eigen::Ref<const Matrix>& dbx, const Eigen::Ref<const Matrix>& dbphi);

/// Brownian increments (dB_x, dB_phi) with covariance taken from the
/// sigma_xx, cross_xphi and sigma_phiphi blocks of `cov`.
std::pair<Matrix, Matrix> brownian_increments(const CovarianceSpec& cov, Index steps, std::uint64_t seed,
                                              std::uint64_t replication = 0);

GPath simulate_g_path(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Vector>& phi,
                      const CovarianceSpec& cov, const MeshSpec& mesh, std::uint64_t seed,
                      std::uint64_t replication = 0);

/// Equally spaced lambda points on [pi1, pi2]; a single point when pi1 == pi2.
Vector lambda_grid(double pi1, double pi2, Index points = 71);

/// Inputs of the sheet functionals behind the OLS sup-Wald limits.
struct SheetLimitParams {
    Vector c = Vector::Ones(1);
    Vector phi = Vector::Zero(1);
    CovarianceSpec cov = CovarianceSpec::identity(1, 1);
    Vector lambdas = lambda_grid(0.15, 0.85);
    bool intercept = true;
};

/// One draw of the OLS limit functionals built from a single G path and
/// Brownian sheet.
struct SheetDraw {
    Vector pointwise;      ///< linearity form at every lambda
    double sup_linearity;  ///< sup over lambda
    double slope_form;     ///< form for beta = 0 in the linear model
    double sup_joint() const noexcept { return slope_form + sup_linearity; }
};

/// Uses the exact conditional law of the sheet integrals given G: the
/// increments int G~ dW over disjoint lambda cells are independent
/// N(0, dlambda * int G~ G~'). Throws SingularLimitGram when int G~ G~' is
/// singular twice in a row.
SheetDraw draw_sheet_limit(const SheetLimitParams& params, const MeshSpec& mesh, std::uint64_t replication);

/// Same functional with an explicit Brownian sheet on the (steps x cells)
/// lattice. Slow; used to cross-check the conditional route.
SheetDraw draw_sheet_limit_lattice(const SheetLimitParams& params, const MeshSpec& mesh, std::uint64_t replication);

/// Independent N(0, ds * dlambda) sheet increments, one row per time step
/// and one column per lambda cell [0, l_1], (l_1, l_2], ..., (l_L, 1].
Matrix brownian_sheet_increments(Index steps, const Eigen::Ref<const Vector>& lambdas, std::uint64_t seed,
                                 std::uint64_t replication);

/// Draws of the pivotal IVX limits with p-dimensional Brownian motion W
/// on the lambda grid and BB(l) = W(l) - l W(1).
struct BridgeDraw {
    double w1_squared;     ///< W(1)'W(1)
    double sup_bridge;     ///< sup BB'BB / (l (1-l))
    Vector pointwise;
    double joint() const noexcept { return w1_squared + sup_bridge; }
};

BridgeDraw draw_bridge_limit(const Eigen::Ref<const Vector>& lambdas, Index p, std::uint64_t seed,
                                   std::uint64_t replication);

/// Inputs of the scaled argmax law for the threshold estimator.
struct ThresholdLimitParams {
    Vector c = Vector::Ones(1);
    Vector phi = Vector::Zero(1);
    CovarianceSpec cov = CovarianceSpec::identity(1, 1);
    Vector delta0 = Vector::Ones(1);
    double f_gamma0 = 1.0;
    double sigma_u = 1.0;
    double truncation = 50.0;
    double h = 0.01;  ///< mesh of the two-sided Brownian motion
};

struct ThresholdLimitDraw {
    double value = 0.0;   ///< scale * argmax
    double argmax = 0.0;  ///< argmax of W(r) - |r|/2 over [-T, T]
    double scale = 0.0;   ///< sigma_u^2 / (f delta0' int GG' delta0)
    bool at_boundary = false;
};

/// Never throws for a boundary argmax; reports it in `at_boundary`.
ThresholdLimitDraw draw_threshold_limit_raw(const ThresholdLimitParams& params, const MeshSpec& mesh,
                                            std::uint64_t replication);
/// Throws ArgmaxAtBoundary when the argmax lands on +-T.
double draw_threshold_limit(const ThresholdLimitParams& params, const MeshSpec& mesh, std::uint64_t replication);

/// Argmax of W(r) - |r|/2 on the mesh over [-T, T] (W two-sided, W(0) = 0).
std::pair<double, bool> two_sided_argmax(double truncation, double h, std::uint64_t seed, std::uint64_t replication);

/// Distribution function of argmax_r {W(r) - |r|/2}.
double argmax_cdf(double x);

enum class Functional { SupWaldOLS_H1, SupWaldOLS_H2, SupWaldIVX_H1, SupWaldIVX_H2, ThresholdArgmax };

std::string_view to_string(Functional f) noexcept;
Functional parse_functional(std::string_view text);

/// Everything a functional depends on. Unused fields are ignored.
struct FunctionalParams {
    Vector c = Vector::Ones(1);
    Vector phi = Vector::Zero(1);
    CovarianceSpec cov = CovarianceSpec::identity(1, 1);
    double pi1 = 0.15;
    double pi2 = 0.85;
    Index lambda_points = 71;
    Index p = 1;
    bool intercept = true;
    Vector delta0 = Vector::Ones(1);
    double f_gamma0 = 1.0;
    double sigma_u = 1.0;
    double truncation = 50.0;
};

/// Runs `body(i)` for i in [0, count) on up to `threads` workers
/// (0 = hardware concurrency). Work is claimed dynamically but each index
/// runs exactly once, so per-index outputs do not depend on the schedule.
/// The first exception thrown by a body is rethrown after all workers stop.
void parallel_for(Index count, unsigned threads, const std::function<void(Index)>& body);

/// mesh.reps draws of the functional; draw i uses replication i.
Vector simulate_functional(Functional f, const FunctionalParams& params, const MeshSpec& mesh, unsigned threads = 0);

/// Sample quantile (Hyndman-Fan type 7) of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double level);

struct CriticalValueTable {
    Functional functional = Functional::SupWaldIVX_H2;
    FunctionalParams params;
    std::vector<double> levels;
    std::vector<double> quantiles;
    std::vector<double> std_errors;  ///< bootstrap standard errors of the quantiles
    Index reps = 0;
    Index steps = 0;
    std::uint64_t seed = 0;
    std::string version;
    std::vector<double> sorted_draws;  ///< kept in memory only

    /// Right-tail probability of `stat`: empirical when draws are present,
    /// otherwise interpolated between tabulated levels and clamped to them.
    double pvalue(double stat) const;
    double critical_value(double level) const;
};

/// Quantiles at `levels` (sorted ascending, duplicates removed; each in (0,1)).
CriticalValueTable tabulate_critical_values(Functional f, const FunctionalParams& params, std::vector<double> levels,
                                            const MeshSpec& mesh, unsigned threads = 0, Index bootstrap = 200);

/// Builds a table from existing draws.
CriticalValueTable table_from_draws(Functional f, const FunctionalParams& params, std::vector<double> levels,
                                    const MeshSpec& mesh, const Vector& draws, Index bootstrap = 200);

}  // namespace tpr
