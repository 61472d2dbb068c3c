#include "tpr/estimate.hpp"
#include "tpr/ivx.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace tpr;

namespace {

double max_rel(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    return scale == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
}

RegressorPath stur_path(Index n, Index p, double c, double phi, std::uint64_t seed) {
    const auto panel = std::make_shared<const InnovationPanel>(draw_innovations(CovarianceSpec::identity(p, 1), n, seed));
    return gen_regressor_path(testing::persistence(p, c, phi), panel, n);
}

}  // namespace

TEST_CASE("instrument coefficient and config") {
    CHECK(instrument_coefficient(250, {}) == doctest::Approx(0.99474).epsilon(1e-5));
    CHECK_THROWS_AS(instrument_coefficient(250, {0.0, 0.95}), Error);
    CHECK_THROWS_AS(instrument_coefficient(250, {1.0, 1.0}), Error);
}

TEST_CASE("standard instrument") {
    SUBCASE("constant series gives a zero instrument") {
        const Matrix x = Matrix::Constant(50, 2, 3.5);
        CHECK(build_instrument(x, IvxConfig{}).isZero(0.0));
    }
    SUBCASE("recursion equals the double sum") {
        const auto path = stur_path(200, 2, 2.0, 0.25, 3);
        const IvxConfig cfg;
        const Matrix z = build_instrument(path.x, cfg, 200);
        const double rho = instrument_coefficient(200, cfg);
        Matrix direct = Matrix::Zero(path.x.rows(), 2);
        for (Index t = 1; t < path.x.rows(); ++t) {
            for (Index j = 0; j < t; ++j) direct.row(t) += std::pow(rho, j) * (path.x.row(t - j) - path.x.row(t - j - 1));
        }
        CHECK(max_rel(z, direct) < 1e-12);
    }
    SUBCASE("single row is rejected") {
        CHECK_THROWS_AS(build_instrument(Matrix::Ones(1, 1), IvxConfig{}), Error);
    }
}

TEST_CASE("corrected instrument") {
    const IvxConfig cfg;
    SUBCASE("c = 0, phi = 0 reduces to the standard instrument") {
        const auto path = stur_path(150, 1, 0.0, 0.0, 4);
        const auto ci = build_corrected_instrument(path, cfg);
        CHECK(ci.eta2.isZero(0.0));
        CHECK(ci.eta3.isZero(0.0));
        CHECK(max_rel(ci.z_tilde, ci.z) < 1e-12);
    }
    SUBCASE("each correction term equals its double sum") {
        const Index n = 100;
        const auto path = stur_path(n, 2, 2.0, 0.5, 5);
        const auto ci = build_corrected_instrument(path, cfg);
        const double rho = instrument_coefficient(n, cfg);
        Matrix e1 = Matrix::Zero(n + 1, 2), e2 = e1, e3 = e1;
        for (Index m = 1; m <= n; ++m) {
            for (Index j = 1; j <= m; ++j) {
                const double w = std::pow(rho, m - j);
                const double s = path.u_phi()(j - 1, 0) * 0.5;
                e1.row(m) += w * path.x.row(j - 1);
                e2.row(m) += w * s * path.x.row(j - 1);
                e3.row(m) += w * s * s * path.x.row(j - 1);
            }
        }
        CHECK(max_rel(ci.eta1, e1) < 1e-12);
        CHECK(max_rel(ci.eta2, e2) < 1e-12);
        CHECK(max_rel(ci.eta3, e3) < 1e-12);
        const double nn = static_cast<double>(n);
        const Matrix zt = ci.z + 2.0 / nn * e1 + e2 / std::sqrt(nn) + e3 / (2.0 * nn);
        CHECK(max_rel(ci.z_tilde, zt) < 1e-12);
        CHECK(corrected_sample_instrument(path, cfg) == ci.z_tilde.topRows(n));
    }
    SUBCASE("homogeneous of degree one in x") {
        auto path = stur_path(120, 1, 1.0, 0.25, 6);
        const auto base = build_corrected_instrument(path, cfg);
        path.x *= 2.0;
        const auto doubled = build_corrected_instrument(path, cfg);
        CHECK(max_rel(doubled.z, 2.0 * base.z) < 1e-14);
        CHECK(max_rel(doubled.eta1, 2.0 * base.eta1) < 1e-14);
        CHECK(max_rel(doubled.eta2, 2.0 * base.eta2) < 1e-14);
        CHECK(max_rel(doubled.eta3, 2.0 * base.eta3) < 1e-14);
    }
    SUBCASE("path without stored draws") {
        RegressorPath bare;
        bare.x = Matrix::Ones(10, 1);
        bare.rho = Matrix::Ones(9, 1);
        try {
            build_corrected_instrument(bare, cfg);
            FAIL("expected MissingExogenousDraws");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MissingExogenousDraws);
        }
    }
}

TEST_CASE("ivx_fit") {
    SUBCASE("noiseless response is recovered") {
        auto s = testing::null_sample(300, 7, 2, 2.0, 0.25);
        const Vector b1 = (Vector(2) << 0.7, -0.2).finished();
        const Vector b2 = (Vector(2) << -0.1, 0.4).finished();
        for (Index t = 0; t < s.n(); ++t) {
            s.y(t) = s.q_lag(t) <= 0.0 ? 1.0 + s.x_lag.row(t).dot(b1) : -0.5 + s.x_lag.row(t).dot(b2);
        }
        const auto fit = ivx_fit(s, 0.0, IvxConfig{});
        CHECK((fit.beta.head(2) - b1).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((fit.beta.tail(2) - b2).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(fit.alpha(0) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(fit.alpha(1) == doctest::Approx(-0.5).epsilon(1e-8));
        CHECK(fit.z_path.rows() == s.n());
    }
    SUBCASE("degenerate instrument") {
        const auto s = testing::null_sample(100, 8);
        try {
            ivx_fit(s, 0.0, Matrix::Zero(100, 1));
            FAIL("expected NearSingularInstrumentGram");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NearSingularInstrumentGram);
        }
    }
    SUBCASE("covariance is the regime-blocked sandwich") {
        const auto s = testing::threshold_sample(200, 9, 0.5, 1, 2.0, 0.25);
        const IvxConfig cfg;
        const auto fit = ivx_fit(s, 0.1, cfg);
        const Matrix z = sample_instrument(s, cfg);
        const auto in1 = regime_indicator(s, 0.1);
        const double sigma2 = ols_fit(s, 0.1).ssr / s.n();
        for (int regime = 0; regime < 2; ++regime) {
            double zx = 0, zz = 0, zy = 0, xs = 0, ys = 0, zs = 0;
            double m = 0;
            for (Index t = 0; t < s.n(); ++t) {
                if (in1(t) != (regime == 0)) continue;
                m += 1;
                xs += s.x_lag(t, 0);
                ys += s.y(t);
                zs += z(t, 0);
            }
            for (Index t = 0; t < s.n(); ++t) {
                if (in1(t) != (regime == 0)) continue;
                const double xc = s.x_lag(t, 0) - xs / m;
                zx += z(t, 0) * xc;
                zy += z(t, 0) * (s.y(t) - ys / m);
                zz += (z(t, 0) - zs / m) * (z(t, 0) - zs / m);
            }
            CHECK(fit.beta(regime) == doctest::Approx(zy / zx).epsilon(1e-10));
            CHECK(fit.avar(regime, regime) == doctest::Approx(sigma2 * zz / (zx * zx)).epsilon(1e-10));
        }
        CHECK(fit.avar(0, 1) == 0.0);
    }
    SUBCASE("shifting q and gamma together leaves the fit unchanged") {
        auto s = testing::threshold_sample(200, 10, 0.5);
        const auto a = ivx_fit(s, 0.2, IvxConfig{});
        s.q_lag.array() += 5.0;
        const auto b = ivx_fit(s, 5.2, IvxConfig{});
        CHECK(a.beta == b.beta);
        CHECK(a.avar == b.avar);
    }
    SUBCASE("matches OLS on average under exogeneity") {
        const Index B = 500;
        Vector diff(B);
        for (Index b = 0; b < B; ++b) {
            const auto sim = simulate_threshold_sample(ThresholdDgpSpec::null_model(1), testing::persistence(1, 1.0, 0.0),
                                                       CovarianceSpec::identity(1, 1), 500, 11,
                                                       static_cast<std::uint64_t>(b));
            Vector q = sim.sample.q_lag;
            std::nth_element(q.data(), q.data() + 250, q.data() + q.size());
            const double gamma = q(250);
            const auto iv = ivx_fit(sim.sample, gamma, IvxConfig{});
            const auto ols = ols_fit(sim.sample, gamma);
            diff(b) = iv.beta(0) - ols.theta(1);
        }
        const double mean = diff.mean();
        const double se = std::sqrt((diff.array() - mean).square().sum() / (B - 1) / B);
        CHECK(std::abs(mean) < 3.0 * se);
    }
    SUBCASE("corrected instrument through the simulated-sample overload") {
        const auto sim = simulate_threshold_sample(ThresholdDgpSpec::null_model(1), testing::persistence(1, 1.0, 0.25),
                                                   CovarianceSpec::identity(1, 1), 200, 12);
        const auto plain = ivx_fit(sim, 0.0, IvxConfig{}, false);
        const auto corrected = ivx_fit(sim, 0.0, IvxConfig{}, true);
        CHECK_FALSE(plain.corrected);
        CHECK(corrected.corrected);
        CHECK(corrected.z_path == corrected_sample_instrument(sim.path, IvxConfig{}));
    }
}

TEST_CASE("filtered perturbation limit") {
    const IvxConfig cfg;
    const Matrix omega = Matrix::Identity(1, 1);
    SUBCASE("phi = 0 gives zeros") {
        CHECK(simulate_znphi_limit(cfg, Vector::Zero(1), omega, 100, 1).isZero(0.0));
    }
    SUBCASE("variance phi' Omega phi / (2 c_z) and zero mean") {
        const Index draws = 100000;
        const Vector z = simulate_znphi_limit(cfg, Vector::Ones(1), omega, draws, 2);
        const double mean = z.mean();
        const double var = (z.array() - mean).square().sum() / (draws - 1);
        CHECK(std::abs(mean) < 3.0 * std::sqrt(0.5 / draws));
        CHECK(std::abs(var - 0.5) < 3.0 * 0.5 * std::sqrt(2.0 / draws));
    }
    SUBCASE("finite-n variance approaches the limit") {
        double previous = 1e300;
        for (Index n : {250, 1000, 4000}) {
            const double gap = std::abs(znphi_finite_variance(n, cfg, 1.0) - 0.5);
            CHECK(gap < previous);
            previous = gap;
        }
        const Index draws = 4000;
        const Vector z = simulate_znphi_finite(1000, cfg, Vector::Ones(1), omega, draws, 3);
        const double target = znphi_finite_variance(1000, cfg, 1.0);
        const double var = z.squaredNorm() / draws;
        CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / draws));
    }
}
