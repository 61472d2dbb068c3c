#include "tpr/dgp.hpp"

#include "tpr/rng.hpp"

#include <cmath>
#include <numbers>

namespace tpr {

namespace {

constexpr double kOverflowBound = 1e150;

}  // namespace

double realized_coefficient(CoefficientForm form, double c, double perturbation, Index n) noexcept {
    const double nn = static_cast<double>(n);
    const double s = perturbation / std::sqrt(nn);
    if (form == CoefficientForm::ExactExponential) return std::exp(c / nn + s);
    return 1.0 + c / nn + s + 0.5 * s * s;
}

RegressorPath gen_regressor_path(const PersistenceSpec& spec, std::shared_ptr<const InnovationPanel> panel,
                                 Index n) {
    if (!panel) throw Error(ErrorKind::DimensionMismatch, "no innovation panel");
    if (n < 1) throw Error(ErrorKind::InvalidSampleSize, "path length must be positive");
    if (panel->n() < n) throw Error(ErrorKind::DimensionMismatch, "innovation panel shorter than n");
    const Index p = spec.p();
    if (panel->p != p || panel->d != spec.d()) {
        throw Error(ErrorKind::DimensionMismatch, "c/phi dimensions do not match the innovation panel");
    }

    RegressorPath path;
    path.spec = spec;
    path.x.resize(n + 1, p);
    path.rho.resize(n, p);
    if (spec.initial == InitialCondition::Given) {
        if (spec.x0.size() != p) throw Error(ErrorKind::DimensionMismatch, "x0 has wrong length");
        path.x.row(0) = spec.x0.transpose();
    } else {
        path.x.row(0).setZero();
    }

    const auto u_x = panel->u_x();
    const auto u_phi = panel->u_phi();
    for (Index t = 1; t <= n; ++t) {
        const double s = u_phi.row(t - 1).dot(spec.phi);
        for (Index i = 0; i < p; ++i) {
            const double rho = realized_coefficient(spec.form, spec.c(i), s, n);
            path.rho(t - 1, i) = rho;
            const double next = rho * path.x(t - 1, i) + u_x(t - 1, i);
            if (!std::isfinite(next) || std::abs(next) > kOverflowBound) {
                throw Error(ErrorKind::OverflowDetected,
                            "regressor " + std::to_string(i) + " left floating-point range at t=" + std::to_string(t));
            }
            path.x(t, i) = next;
        }
    }
    path.innovations = std::move(panel);
    return path;
}

void Sample::validate() const {
    if (x_lag.rows() != y.size() || q_lag.size() != y.size()) {
        throw Error(ErrorKind::DimensionMismatch, "sample arrays have different lengths");
    }
    if (!y.allFinite() || !x_lag.allFinite() || !q_lag.allFinite()) {
        throw Error(ErrorKind::ParseError, "sample contains non-finite values");
    }
}

std::pair<Vector, Vector> ThresholdDgpSpec::slopes(Index n) const {
    if (delta0) {
        if (delta0->size() != beta2.size()) throw Error(ErrorKind::DimensionMismatch, "delta0 and beta2 differ in length");
        const double scale = std::pow(static_cast<double>(n), -tau);
        return {beta2 + scale * *delta0, beta2};
    }
    if (beta1.size() != beta2.size()) throw Error(ErrorKind::DimensionMismatch, "beta1 and beta2 differ in length");
    return {beta1, beta2};
}

ThresholdDgpSpec ThresholdDgpSpec::standard_design(Index p) {
    ThresholdDgpSpec spec;
    spec.alpha1 = spec.alpha2 = 0.0;
    spec.beta2 = Vector::Zero(p);
    spec.beta1 = Vector::Zero(p);
    spec.delta0 = Vector::Constant(p, 2.0);
    spec.tau = 0.25;
    spec.gamma0 = 0.25;
    spec.threshold_dist = ThresholdDistribution::StandardNormal;
    spec.has_intercept = true;
    return spec;
}

ThresholdDgpSpec ThresholdDgpSpec::null_model(Index p) {
    ThresholdDgpSpec spec;
    spec.beta1 = Vector::Zero(p);
    spec.beta2 = Vector::Zero(p);
    return spec;
}

Sample assemble_threshold_sample(const ThresholdDgpSpec& dgp, const RegressorPath& path,
                                 const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& u_y) {
    const Index n = path.n();
    const Index p = path.p();
    if (u_y.size() != n || q.size() < n) throw Error(ErrorKind::DimensionMismatch, "q or u_y too short");
    const auto [beta1, beta2] = dgp.slopes(n);
    if (beta1.size() != p) throw Error(ErrorKind::DimensionMismatch, "slope length differs from regressor count");

    Sample s;
    s.has_intercept = dgp.has_intercept;
    s.x_lag = path.x.topRows(n);
    s.q_lag = q.head(n);
    s.y.resize(n);
    const double a1 = dgp.has_intercept ? dgp.alpha1 : 0.0;
    const double a2 = dgp.has_intercept ? dgp.alpha2 : 0.0;
    for (Index t = 0; t < n; ++t) {
        const bool regime1 = s.q_lag(t) <= dgp.gamma0;
        const double mean = regime1 ? a1 + s.x_lag.row(t).dot(beta1) : a2 + s.x_lag.row(t).dot(beta2);
        s.y(t) = mean + u_y(t);
    }
    return s;
}

Vector draw_threshold_variable(ThresholdDistribution dist, Index count, std::uint64_t seed,
                               std::uint64_t replication) {
    const NormalStream rng(seed, streams::threshold_variable, replication);
    Vector q(count);
    for (Index t = 0; t < count; ++t) {
        q(t) = dist == ThresholdDistribution::StandardNormal ? rng.normal(static_cast<std::uint64_t>(t))
                                                             : rng.uniform(static_cast<std::uint64_t>(t));
    }
    return q;
}

double threshold_density(ThresholdDistribution dist, double gamma) noexcept {
    if (dist == ThresholdDistribution::Uniform01) return (gamma >= 0.0 && gamma <= 1.0) ? 1.0 : 0.0;
    return std::exp(-0.5 * gamma * gamma) / std::sqrt(2.0 * std::numbers::pi);
}

SimulatedSample simulate_threshold_sample(const ThresholdDgpSpec& dgp, const PersistenceSpec& pers,
                                          const CovarianceSpec& cov, Index n, std::uint64_t seed,
                                          std::uint64_t replication) {
    if (n < 20) throw Error(ErrorKind::InvalidSampleSize, "threshold samples need n >= 20");
    auto panel = std::make_shared<const InnovationPanel>(draw_innovations(cov, n, seed, replication));
    SimulatedSample out{Sample{}, gen_regressor_path(pers, panel, n),
                        draw_threshold_variable(dgp.threshold_dist, n + 1, seed, replication)};
    out.sample = assemble_threshold_sample(dgp, out.path, out.q, out.path.innovations->u_y().head(n));
    return out;
}

Sample gen_threshold_sample(const ThresholdDgpSpec& dgp, const PersistenceSpec& pers, const CovarianceSpec& cov,
                            Index n, std::uint64_t seed, std::uint64_t replication) {
    return simulate_threshold_sample(dgp, pers, cov, n, seed, replication).sample;
}

}  // namespace tpr
