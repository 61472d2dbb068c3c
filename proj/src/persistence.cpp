#include "tpr/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tpr {

void PersistenceBounds::validate() const {
    if (!(c_lo < c_hi) || !(phi_lo < phi_hi)) throw Error(ErrorKind::InvalidConfig, "empty persistence bounds");
}

namespace {

void check_dims(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi, Index d) {
    if (x.size() < 2) throw Error(ErrorKind::DimensionMismatch, "path needs at least two points");
    if (u_phi.rows() != x.size() - 1) throw Error(ErrorKind::DimensionMismatch, "u_phi must have one row per period");
    if (u_phi.cols() != d) throw Error(ErrorKind::DimensionMismatch, "phi length differs from u_phi columns");
}

/// Residuals and Jacobian of the NLLS criterion at theta = (c, phi').
class Problem {
public:
    Problem(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi) : x_(x), u_(u_phi) {}

    Index n() const { return x_.size() - 1; }
    Index dim() const { return 1 + u_.cols(); }
    double noise_floor() const { return 1e-12 * x_.norm(); }

    double objective(const Vector& theta) const {
        return nlls_objective(x_, u_, theta(0), theta.tail(theta.size() - 1));
    }

    void linearize(const Vector& theta, Vector& r, Matrix& J) const {
        const Index nobs = n();
        const double root_n = std::sqrt(static_cast<double>(nobs));
        const Vector phi = theta.tail(theta.size() - 1);
        r.resize(nobs);
        J.resize(nobs, dim());
        for (Index t = 1; t <= nobs; ++t) {
            const double s = u_.row(t - 1).dot(phi);
            const double beta = realized_coefficient(CoefficientForm::ExactExponential, theta(0), s, nobs);
            const double g = -beta * x_(t - 1);
            r(t - 1) = x_(t) - beta * x_(t - 1);
            J(t - 1, 0) = g / static_cast<double>(nobs);
            J.row(t - 1).tail(dim() - 1) = (g / root_n) * u_.row(t - 1);
        }
    }

private:
    Eigen::Ref<const Vector> x_;
    Eigen::Ref<const Matrix> u_;
};

struct Box {
    Vector lo, hi;
    Vector clamp(const Vector& v) const { return v.cwiseMax(lo).cwiseMin(hi); }
};

/// Largest |cos(J_j, r)| over coordinates not pinned by an active bound.
/// Residual norms below `floor` are rounding noise and count as stationary.
double stationarity(const Vector& theta, const Vector& r, const Matrix& J, const Box& box, double floor) {
    const double rn = r.norm();
    if (rn <= floor) return 0.0;
    double worst = 0.0;
    for (Index j = 0; j < J.cols(); ++j) {
        const double g = J.col(j).dot(r);
        if ((theta(j) <= box.lo(j) && g > 0.0) || (theta(j) >= box.hi(j) && g < 0.0)) continue;
        const double jn = J.col(j).norm();
        if (jn == 0.0) continue;
        worst = std::max(worst, std::abs(g) / (jn * rn));
    }
    return worst;
}

struct RunState {
    Vector theta;
    double objective = 0.0;
    bool converged = false;
    bool stalled = false;
    Index iterations = 0;
};

RunState gauss_newton(const Problem& prob, Vector theta, const Box& box, const PersistenceOptions& opt,
                      std::vector<double>& trace, Index budget) {
    RunState st;
    st.theta = box.clamp(theta);
    st.objective = prob.objective(st.theta);
    Vector r;
    Matrix J;
    while (true) {
        prob.linearize(st.theta, r, J);
        if (stationarity(st.theta, r, J, box, prob.noise_floor()) <= opt.gradient_tol) {
            st.converged = true;
            return st;
        }
        if (st.iterations >= budget) return st;

        // Directions only on coordinates not pinned at a bound.
        const Vector grad = J.transpose() * r;
        std::vector<Index> free;
        for (Index j = 0; j < J.cols(); ++j) {
            const bool pinned =
                (st.theta(j) <= box.lo(j) && grad(j) > 0.0) || (st.theta(j) >= box.hi(j) && grad(j) < 0.0);
            if (!pinned) free.push_back(j);
        }
        const Matrix Jf = J(Eigen::all, free);
        const Vector step_free = Jf.colPivHouseholderQr().solve(-r);
        Vector step = Vector::Zero(st.theta.size());
        for (std::size_t i = 0; i < free.size(); ++i) step(free[i]) = step_free(static_cast<Index>(i));

        bool accepted = false;
        double alpha = 1.0;
        Vector candidate;
        double f_candidate = 0.0;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            candidate = box.clamp(st.theta + alpha * step);
            f_candidate = prob.objective(candidate);
            if (f_candidate <= st.objective) {
                accepted = true;
                break;
            }
        }
        const double moved = (candidate - st.theta).lpNorm<Eigen::Infinity>();
        if (!accepted || moved <= opt.step_tol * (1.0 + st.theta.lpNorm<Eigen::Infinity>())) {
            if (accepted && f_candidate < st.objective) {
                st.theta = candidate;
                st.objective = f_candidate;
                ++st.iterations;
                trace.push_back(st.objective);
            }
            prob.linearize(st.theta, r, J);
            st.converged = stationarity(st.theta, r, J, box, prob.noise_floor()) <= opt.gradient_tol;
            st.stalled = !st.converged;
            return st;
        }
        st.theta = candidate;
        st.objective = f_candidate;
        ++st.iterations;
        trace.push_back(st.objective);
    }
}

}  // namespace

double nlls_objective(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi, double c,
                      const Eigen::Ref<const Vector>& phi) {
    check_dims(x, u_phi, phi.size());
    const Index n = x.size() - 1;
    double total = 0.0;
    for (Index t = 1; t <= n; ++t) {
        const double s = u_phi.row(t - 1).dot(phi);
        const double e = x(t) - realized_coefficient(CoefficientForm::ExactExponential, c, s, n) * x(t - 1);
        total += e * e;
    }
    return total;
}

double nlls_objective(const RegressorPath& path, double c, const Eigen::Ref<const Vector>& phi, Index column) {
    if (!path.innovations) throw Error(ErrorKind::MissingExogenousDraws, "path has no stored u_phi draws");
    if (column < 0 || column >= path.p()) throw Error(ErrorKind::DimensionMismatch, "column out of range");
    return nlls_objective(path.x.col(column), path.u_phi(), c, phi);
}

PersistenceFit fit_persistence(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Matrix>& u_phi,
                               double c_init, const Eigen::Ref<const Vector>& phi_init,
                               const PersistenceBounds& bounds, const PersistenceOptions& options) {
    bounds.validate();
    check_dims(x, u_phi, phi_init.size());
    const Index d = phi_init.size();
    if (c_init < bounds.c_lo || c_init > bounds.c_hi || (phi_init.array() < bounds.phi_lo).any() ||
        (phi_init.array() > bounds.phi_hi).any()) {
        throw Error(ErrorKind::InvalidConfig, "initial point outside the persistence bounds");
    }

    const Problem prob(x, u_phi);
    Box box;
    box.lo = Vector::Constant(1 + d, bounds.phi_lo);
    box.hi = Vector::Constant(1 + d, bounds.phi_hi);
    box.lo(0) = bounds.c_lo;
    box.hi(0) = bounds.c_hi;

    Vector theta0(1 + d);
    theta0 << c_init, phi_init;

    PersistenceFit fit;
    fit.trace.push_back(prob.objective(theta0));
    RunState best = gauss_newton(prob, theta0, box, options, fit.trace, options.max_iterations);
    Index used = best.iterations;

    if (!best.converged) {
        // Coarse lattice over the whole box, then refine from its best node.
        fit.used_grid_fallback = true;
        const Index gc = std::max<Index>(options.grid_c, 2);
        const Index gp = std::max<Index>(options.grid_phi, 2);
        Index nodes = gc;
        for (Index j = 0; j < d; ++j) nodes *= gp;
        Vector node(1 + d), best_node = best.theta;
        double best_value = best.objective;
        for (Index k = 0; k < nodes; ++k) {
            Index rest = k;
            node(0) = box.lo(0) + (box.hi(0) - box.lo(0)) * static_cast<double>(rest % gc) / static_cast<double>(gc - 1);
            rest /= gc;
            for (Index j = 0; j < d; ++j) {
                node(1 + j) = box.lo(1 + j) +
                              (box.hi(1 + j) - box.lo(1 + j)) * static_cast<double>(rest % gp) / static_cast<double>(gp - 1);
                rest /= gp;
            }
            const double v = prob.objective(node);
            if (v < best_value) {
                best_value = v;
                best_node = node;
            }
        }
        if (best_value < best.objective) fit.trace.push_back(best_value);
        std::vector<double> refine_trace;
        RunState refined =
            gauss_newton(prob, best_node, box, options, refine_trace, std::max<Index>(options.max_iterations - used, 1));
        used += refined.iterations;
        if (refined.objective <= best.objective) {
            for (double v : refine_trace) {
                if (v <= fit.trace.back()) fit.trace.push_back(v);
            }
            best = refined;
        }
    }

    fit.c_hat = best.theta(0);
    fit.phi_hat = best.theta.tail(d);
    fit.objective = best.objective;
    fit.converged = best.converged;
    fit.iterations = used;
    if (!fit.converged) fit.warning = ErrorKind::MaxIterationsExceeded;
    return fit;
}

PersistenceFit fit_persistence(const RegressorPath& path, double c_init, const Eigen::Ref<const Vector>& phi_init,
                               const PersistenceBounds& bounds, Index column, const PersistenceOptions& options) {
    if (!path.innovations) throw Error(ErrorKind::MissingExogenousDraws, "path has no stored u_phi draws");
    if (column < 0 || column >= path.p()) throw Error(ErrorKind::DimensionMismatch, "column out of range");
    return fit_persistence(path.x.col(column), path.u_phi(), c_init, phi_init, bounds, options);
}

}  // namespace tpr
