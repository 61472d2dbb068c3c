#include "tpr/ivx.hpp"

#include "tpr/estimate.hpp"
#include "tpr/rng.hpp"

#include <cmath>

namespace tpr {

void IvxConfig::validate() const {
    if (!(c_z > 0.0) || !(gamma_z > 0.0 && gamma_z < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "IVX requires c_z > 0 and 0 < gamma_z < 1");
    }
}

double instrument_coefficient(Index n, const IvxConfig& cfg) {
    cfg.validate();
    return 1.0 - cfg.c_z / std::pow(static_cast<double>(n), cfg.gamma_z);
}

CorrectedInstrument build_corrected_instrument(const RegressorPath& path, const IvxConfig& cfg) {
    if (!path.innovations) throw Error(ErrorKind::MissingExogenousDraws, "path has no stored u_phi draws");
    const Index n = path.n();
    const Index p = path.p();
    const double rho = instrument_coefficient(n, cfg);
    const double nn = static_cast<double>(n);

    CorrectedInstrument out;
    out.z = build_instrument(path.x, cfg, n);
    out.eta1 = Matrix::Zero(n + 1, p);
    out.eta2 = Matrix::Zero(n + 1, p);
    out.eta3 = Matrix::Zero(n + 1, p);
    const auto u_phi = path.u_phi();
    for (Index m = 1; m <= n; ++m) {
        const double s = u_phi.row(m - 1).dot(path.spec.phi);
        const auto x_prev = path.x.row(m - 1);
        out.eta1.row(m) = rho * out.eta1.row(m - 1) + x_prev;
        out.eta2.row(m) = rho * out.eta2.row(m - 1) + s * x_prev;
        out.eta3.row(m) = rho * out.eta3.row(m - 1) + (s * s) * x_prev;
    }
    out.z_tilde = out.z + out.eta1 * (path.spec.c / nn).asDiagonal() + out.eta2 / std::sqrt(nn) +
                  out.eta3 / (2.0 * nn);
    return out;
}

Matrix corrected_sample_instrument(const RegressorPath& path, const IvxConfig& cfg) {
    return build_corrected_instrument(path, cfg).z_tilde.topRows(path.n());
}

IvxFit ivx_fit(const Sample& s, double gamma, const Eigen::Ref<const Matrix>& instrument, bool corrected) {
    s.validate();
    const Index n = s.n();
    const Index p = s.p();
    if (instrument.rows() != n || instrument.cols() != p) {
        throw Error(ErrorKind::DimensionMismatch, "instrument does not match the sample");
    }
    const auto in1 = regime_indicator(s, gamma);
    const Index n1 = in1.count();
    if (n1 < p + 1 || n - n1 < p + 1) throw Error(ErrorKind::EmptyRegime, "regime too small for IVX fit");

    IvxFit fit;
    fit.corrected = corrected;
    fit.z_path = instrument;
    fit.sigma2 = ols_fit(s, gamma, Parameterization::TwoRegime).ssr / static_cast<double>(n);
    fit.beta.resize(2 * p);
    fit.avar = Matrix::Zero(2 * p, 2 * p);
    if (s.has_intercept) fit.alpha.resize(2);

    for (int regime = 0; regime < 2; ++regime) {
        const Index m = regime == 0 ? n1 : n - n1;
        Matrix Z(m, p), X(m, p);
        Vector y(m);
        Index r = 0;
        for (Index t = 0; t < n; ++t) {
            if (in1(t) != (regime == 0)) continue;
            Z.row(r) = instrument.row(t);
            X.row(r) = s.x_lag.row(t);
            y(r) = s.y(t);
            ++r;
        }
        Matrix Zc = Z;
        Vector x_mean = Vector::Zero(p);
        double y_mean = 0.0;
        if (s.has_intercept) {
            x_mean = X.colwise().mean().transpose();
            y_mean = y.mean();
            X.rowwise() -= x_mean.transpose();
            y.array() -= y_mean;
            Zc.rowwise() -= Z.colwise().mean();
        }
        const Matrix A = Z.transpose() * X;
        const Vector b = Z.transpose() * y;
        const Matrix zmz = Zc.transpose() * Zc;

        const Vector dz = zmz.diagonal();
        const Vector dx = X.colwise().squaredNorm().transpose();
        if ((dz.array() <= 0.0).any() || (dx.array() <= 0.0).any()) {
            throw Error(ErrorKind::NearSingularInstrumentGram, "instrument or regressor has no variation in a regime");
        }
        const Matrix As = dz.cwiseSqrt().cwiseInverse().asDiagonal() * A * dx.cwiseSqrt().cwiseInverse().asDiagonal();
        Eigen::PartialPivLU<Matrix> lu(As);
        if (!(lu.rcond() >= kRankTolerance)) {
            throw Error(ErrorKind::NearSingularInstrumentGram, "instrument-regressor cross moment is singular");
        }
        Eigen::PartialPivLU<Matrix> alu(A);
        const Vector beta = alu.solve(b);
        const Matrix a_inv = alu.inverse();
        fit.beta.segment(regime * p, p) = beta;
        fit.avar.block(regime * p, regime * p, p, p) = fit.sigma2 * a_inv * zmz * a_inv.transpose();
        if (s.has_intercept) fit.alpha(regime) = y_mean - x_mean.dot(beta);
    }
    return fit;
}

IvxFit ivx_fit(const SimulatedSample& sim, double gamma, const IvxConfig& cfg, bool corrected) {
    if (!corrected) return ivx_fit(sim.sample, gamma, cfg);
    return ivx_fit(sim.sample, gamma, corrected_sample_instrument(sim.path, cfg), true);
}

Vector simulate_znphi_limit(const IvxConfig& cfg, const Eigen::Ref<const Vector>& phi,
                            const Eigen::Ref<const Matrix>& omega_phiphi, Index draws, std::uint64_t seed) {
    cfg.validate();
    if (draws < 1) throw Error(ErrorKind::InvalidConfig, "draws must be positive");
    const double var = phi.dot(omega_phiphi * phi) / (2.0 * cfg.c_z);
    const NormalStream rng(seed, streams::znphi);
    Vector out(draws);
    const double sd = std::sqrt(var);
    for (Index i = 0; i < draws; ++i) out(i) = sd * rng.normal(static_cast<std::uint64_t>(i));
    return out;
}

Vector simulate_znphi_finite(Index n, const IvxConfig& cfg, const Eigen::Ref<const Vector>& phi,
                             const Eigen::Ref<const Matrix>& omega_phiphi, Index draws, std::uint64_t seed) {
    const double rho = instrument_coefficient(n, cfg);
    const double sd = std::sqrt(phi.dot(omega_phiphi * phi));
    const double scale = std::pow(static_cast<double>(n), -cfg.gamma_z / 2.0);
    Vector out(draws);
    for (Index b = 0; b < draws; ++b) {
        const NormalStream rng(seed, streams::znphi, static_cast<std::uint64_t>(b) + 1);
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) acc = rho * acc + sd * rng.normal(static_cast<std::uint64_t>(j));
        out(b) = scale * acc;
    }
    return out;
}

double znphi_finite_variance(Index n, const IvxConfig& cfg, double phi_omega_phi) {
    const double rho = instrument_coefficient(n, cfg);
    const double geometric = (1.0 - std::pow(rho, 2.0 * static_cast<double>(n))) / (1.0 - rho * rho);
    return phi_omega_phi * std::pow(static_cast<double>(n), -cfg.gamma_z) * geometric;
}

}  // namespace tpr
