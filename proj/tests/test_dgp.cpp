#include "tpr/dgp.hpp"
#include "tpr/innovations.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace tpr;

namespace {

std::shared_ptr<const InnovationPanel> panel_for(const CovarianceSpec& cov, Index n, std::uint64_t seed,
                                                 std::uint64_t rep = 0) {
    return std::make_shared<const InnovationPanel>(draw_innovations(cov, n, seed, rep));
}

PersistenceSpec persistence(double c, double phi, CoefficientForm form = CoefficientForm::ExactExponential) {
    PersistenceSpec s;
    s.c = Vector::Constant(1, c);
    s.phi = Vector::Constant(1, phi);
    s.form = form;
    return s;
}

}  // namespace

TEST_CASE("c = 0, phi = 0 gives a random walk, bit for bit") {
    const auto panel = panel_for(CovarianceSpec::identity(1, 1), 300, 5);
    const auto path = gen_regressor_path(persistence(0.0, 0.0), panel, 300);
    CHECK((path.rho.array() == 1.0).all());
    double walk = 0.0;
    bool exact = path.x(0, 0) == 0.0;
    for (Index t = 1; t <= 300; ++t) {
        walk += panel->u_x()(t - 1, 0);
        exact = exact && path.x(t, 0) == walk;
    }
    CHECK(exact);
}

TEST_CASE("phi = 0 gives the constant coefficient exp(c/n)") {
    const auto panel = panel_for(CovarianceSpec::identity(1, 1), 250, 1);
    const auto path = gen_regressor_path(persistence(1.0, 0.0), panel, 250);
    CHECK((path.rho.array() == std::exp(1.0 / 250.0)).all());
    CHECK(path.rho(0, 0) == doctest::Approx(1.0040080).epsilon(1e-7));
}

TEST_CASE("expanded and exact coefficient forms differ by O(n^-3/2)") {
    const Index n = 500;
    const auto panel = panel_for(CovarianceSpec::identity(1, 1), n, 21);
    const auto exact = gen_regressor_path(persistence(1.0, 0.25), panel, n);
    const auto expanded = gen_regressor_path(persistence(1.0, 0.25, CoefficientForm::ExpandedQuadratic), panel, n);
    const double gap = (exact.rho - expanded.rho).cwiseAbs().maxCoeff();
    CHECK(gap > 0.0);
    CHECK(gap < 10.0 * std::pow(static_cast<double>(n), -1.5));
}

TEST_CASE("stored coefficients and innovations rebuild the path") {
    const auto cov = CovarianceSpec::with_endogeneity(2, 1, 0.5);
    PersistenceSpec spec;
    spec.c = (Vector(2) << 2.0, 5.0).finished();
    spec.phi = Vector::Constant(1, 0.5);
    const auto panel = panel_for(cov, 400, 8);
    const auto path = gen_regressor_path(spec, panel, 400);
    Matrix rebuilt = Matrix::Zero(401, 2);
    for (Index t = 1; t <= 400; ++t) {
        rebuilt.row(t) = path.rho.row(t - 1).cwiseProduct(rebuilt.row(t - 1)) + panel->u_x().row(t - 1);
    }
    CHECK((rebuilt - path.x).cwiseAbs().maxCoeff() <= 1e-12 * path.x.cwiseAbs().maxCoeff());
}

TEST_CASE("x_1 = u_x1 start coincides with x_0 = 0") {
    const auto panel = panel_for(CovarianceSpec::identity(1, 1), 100, 2);
    const auto path = gen_regressor_path(persistence(2.0, 0.1), panel, 100);
    CHECK(path.x(1, 0) == panel->u_x()(0, 0));
    PersistenceSpec given = persistence(2.0, 0.1);
    given.initial = InitialCondition::Given;
    given.x0 = Vector::Constant(1, 3.0);
    const auto shifted = gen_regressor_path(given, panel, 100);
    CHECK(shifted.x(0, 0) == 3.0);
    CHECK(shifted.x(1, 0) == doctest::Approx(path.rho(0, 0) * 3.0 + panel->u_x()(0, 0)));
}

TEST_CASE("path errors") {
    const auto panel = panel_for(CovarianceSpec::identity(1, 1), 50, 2);
    PersistenceSpec two;
    two.c = Vector::Ones(2);
    CHECK_THROWS_AS(gen_regressor_path(two, panel, 50), Error);
    CHECK_THROWS_AS(gen_regressor_path(persistence(1, 0), panel, 60), Error);
    try {
        gen_regressor_path(persistence(1e5, 0.0), panel, 50);
        FAIL("expected OverflowDetected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OverflowDetected);
    }
}

TEST_CASE("variance of x_n / sqrt(n) approaches the OU variance") {
    const double c = 1.0;
    const Index n = 2000;
    const Index B = 5000;
    double sum_sq = 0.0;
    for (Index b = 0; b < B; ++b) {
        const auto panel = panel_for(CovarianceSpec::identity(1, 1), n, 31, static_cast<std::uint64_t>(b));
        const auto path = gen_regressor_path(persistence(c, 0.0), panel, n);
        const double v = path.x(n, 0) / std::sqrt(static_cast<double>(n));
        sum_sq += v * v;
    }
    const double target = (std::exp(2.0 * c) - 1.0) / (2.0 * c);
    CHECK(rel_diff(sum_sq / B, target) < 0.05);
}

TEST_CASE("threshold sample design") {
    SUBCASE("regime-1 slope of the Monte Carlo design at n = 250") {
        const auto dgp = ThresholdDgpSpec::standard_design(2);
        const auto [b1, b2] = dgp.slopes(250);
        CHECK(b1(0) == doctest::Approx(0.50297).epsilon(1e-5));
        CHECK(b1(1) == b1(0));
        CHECK(b2.isZero());
        CHECK(dgp.gamma0 == 0.25);
    }
    SUBCASE("null model is a linear regression with equal intercepts") {
        const auto dgp = ThresholdDgpSpec::null_model(1);
        const auto [b1, b2] = dgp.slopes(100);
        CHECK(b1 == b2);
        CHECK(dgp.alpha1 == dgp.alpha2);
    }
    SUBCASE("noiseless response reproduces beta'x exactly") {
        ThresholdDgpSpec dgp;
        dgp.beta1 = Vector::Ones(1);
        dgp.beta2 = Vector::Ones(1);
        RegressorPath path;
        path.x = Vector::LinSpaced(41, 0.0, 4.0);
        path.rho = Matrix::Ones(40, 1);
        const Vector q = Vector::LinSpaced(41, -1.0, 1.0);
        const auto s = assemble_threshold_sample(dgp, path, q, Vector::Zero(40));
        CHECK(s.y == path.x.topRows(40).col(0));
    }
    SUBCASE("regimes follow q_{t-1} <= gamma0") {
        const auto sim = simulate_threshold_sample(ThresholdDgpSpec::standard_design(1), persistence(1.0, 0.25),
                                                   CovarianceSpec::identity(1, 1), 200, 4);
        const auto [b1, b2] = ThresholdDgpSpec::standard_design(1).slopes(200);
        const auto u = sim.path.innovations->u_y();
        for (Index t = 0; t < 200; ++t) {
            const double slope = sim.q(t) <= 0.25 ? b1(0) : b2(0);
            CHECK(sim.sample.y(t) == doctest::Approx(slope * sim.path.x(t, 0) + u(t)));
        }
        CHECK(sim.sample.q_lag == sim.q.head(200));
    }
    SUBCASE("n below 20 is rejected") {
        CHECK_THROWS_AS(gen_threshold_sample(ThresholdDgpSpec::null_model(1), persistence(1, 0),
                                             CovarianceSpec::identity(1, 1), 19, 1),
                        Error);
    }
    SUBCASE("same seed reproduces the sample") {
        const auto a = gen_threshold_sample(ThresholdDgpSpec::standard_design(2), PersistenceSpec{Vector::Constant(2, 2.0)},
                                            CovarianceSpec::identity(2, 1), 120, 77, 5);
        const auto b = gen_threshold_sample(ThresholdDgpSpec::standard_design(2), PersistenceSpec{Vector::Constant(2, 2.0)},
                                            CovarianceSpec::identity(2, 1), 120, 77, 5);
        CHECK(a.y.cwiseEqual(b.y).all());
        CHECK(a.x_lag.cwiseEqual(b.x_lag).all());
    }
}
