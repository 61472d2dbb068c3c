#include "tpr/limitsim.hpp"
#include "tpr/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace tpr;

namespace {

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

Matrix coarsen(const Matrix& fine, Index factor) {
    Matrix out = Matrix::Zero(fine.rows() / factor, fine.cols());
    for (Index k = 0; k < fine.rows(); ++k) out.row(k / factor) += fine.row(k);
    return out;
}

}  // namespace

TEST_CASE("G path") {
    const CovarianceSpec cov = CovarianceSpec::identity(1, 1);
    SUBCASE("c = 0, phi = 0 is the Brownian motion itself") {
        const auto [dbx, dbphi] = brownian_increments(cov, 500, 3);
        const auto path = g_path_from_increments(Vector::Zero(1), Vector::Zero(1), dbx, dbphi);
        double w = 0.0;
        bool exact = path.g(0, 0) == 0.0;
        for (Index k = 0; k < 500; ++k) {
            w += dbx(k, 0);
            exact = exact && path.g(k + 1, 0) == w;
        }
        CHECK(exact);
        CHECK(path.bx.col(0) == path.g.col(0));
    }
    SUBCASE("exponent terms vanish for c = 0 and for phi = 0") {
        const auto [dbx, dbphi] = brownian_increments(cov, 400, 4);
        const auto only_phi = g_path_from_increments(Vector::Zero(1), Vector::Constant(1, 0.5), dbx, dbphi);
        const auto only_c = g_path_from_increments(Vector::Constant(1, 2.0), Vector::Zero(1), dbx, dbphi);
        double integral_phi = 0.0, integral_c = 0.0;
        bool same_phi = true, same_c = true;
        for (Index k = 0; k < 400; ++k) {
            const double s0 = k * (1.0 / 400.0), s1 = (k + 1) * (1.0 / 400.0);
            integral_phi += std::exp(-0.5 * only_phi.bphi(k, 0)) * dbx(k, 0);
            integral_c += std::exp(-2.0 * s0) * dbx(k, 0);
            same_phi = same_phi && only_phi.g(k + 1, 0) == std::exp(0.5 * only_phi.bphi(k + 1, 0)) * integral_phi;
            same_c = same_c && only_c.g(k + 1, 0) == std::exp(2.0 * s1) * integral_c;
        }
        CHECK(same_phi);
        CHECK(same_c);
    }
    SUBCASE("second moment of G(1) for phi = 0, c = 2") {
        const MeshSpec mesh{1000, 2000, 5};
        double sum = 0.0;
        for (Index r = 0; r < mesh.reps; ++r) {
            const auto path = simulate_g_path(Vector::Constant(1, 2.0), Vector::Zero(1), cov, mesh, mesh.seed, r);
            sum += path.g(mesh.steps, 0) * path.g(mesh.steps, 0);
        }
        CHECK(rel_diff(sum / mesh.reps, (std::exp(4.0) - 1.0) / 4.0) < 0.10);
    }
    SUBCASE("coupled mesh refinement shrinks endpoint error") {
        const Vector c = Vector::Constant(1, 2.0), phi = Vector::Constant(1, 0.5);
        double err_coarse = 0.0, err_mid = 0.0;
        for (std::uint64_t r = 0; r < 200; ++r) {
            const auto [dbx, dbphi] = brownian_increments(cov, 4000, 6, r);
            const double fine = g_path_from_increments(c, phi, dbx, dbphi).g(4000, 0);
            const double coarse = g_path_from_increments(c, phi, coarsen(dbx, 4), coarsen(dbphi, 4)).g(1000, 0);
            const double mid = g_path_from_increments(c, phi, coarsen(dbx, 2), coarsen(dbphi, 2)).g(2000, 0);
            err_coarse += std::abs(coarse - fine);
            err_mid += std::abs(mid - fine);
        }
        CHECK(err_mid < err_coarse);
    }
    SUBCASE("limit Gram matrix is positive definite") {
        const CovarianceSpec cov2 = CovarianceSpec::identity(2, 1);
        const MeshSpec mesh{2000, 1000, 7};
        int definite = 0;
        for (Index r = 0; r < mesh.reps; ++r) {
            const auto path = simulate_g_path(Vector::Constant(2, 5.0), Vector::Constant(1, 0.25), cov2, mesh, 7, r);
            if (Eigen::LLT<Matrix>(path.gram()).info() == Eigen::Success) ++definite;
        }
        CHECK(definite >= 999);
    }
    SUBCASE("mesh validation") {
        CHECK_THROWS_AS((MeshSpec{50, 1000, 1}.validate()), Error);
        CHECK_THROWS_AS((MeshSpec{1000, 10, 1}.validate()), Error);
    }
}

TEST_CASE("lambda grid") {
    CHECK(lambda_grid(0.15, 0.85).size() == 71);
    CHECK(lambda_grid(0.15, 0.85)(0) == 0.15);
    CHECK(lambda_grid(0.15, 0.85)(70) == doctest::Approx(0.85));
    CHECK(lambda_grid(0.5, 0.5).size() == 1);
    CHECK_THROWS_AS(lambda_grid(0.0, 0.5), Error);
}

TEST_CASE("OLS sup-Wald limit") {
    SUBCASE("single lambda, c = 0, phi = 0 has mean near one") {
        SheetLimitParams params;
        params.c = Vector::Zero(1);
        params.lambdas = Vector::Constant(1, 0.5);
        params.intercept = false;
        const MeshSpec mesh{500, 10000, 8};
        double sum = 0.0;
        for (Index r = 0; r < mesh.reps; ++r) sum += draw_sheet_limit(params, mesh, r).sup_linearity;
        CHECK(std::abs(sum / mesh.reps - 1.0) < 0.10);
    }
    SUBCASE("sup dominates every pointwise value") {
        SheetLimitParams params;
        const MeshSpec mesh{500, 100, 9};
        for (Index r = 0; r < 50; ++r) {
            const auto d = draw_sheet_limit(params, mesh, r);
            CHECK(d.sup_linearity == d.pointwise.maxCoeff());
            CHECK(d.slope_form >= 0.0);
            CHECK(d.sup_joint() >= d.sup_linearity);
        }
    }
    SUBCASE("conditional route agrees with the explicit sheet") {
        SheetLimitParams params;
        params.c = Vector::Constant(1, 2.0);
        params.phi = Vector::Constant(1, 0.25);
        params.lambdas = lambda_grid(0.15, 0.85, 15);
        const MeshSpec mesh{200, 2000, 10};
        std::vector<double> fast, lattice;
        for (Index r = 0; r < mesh.reps; ++r) {
            fast.push_back(draw_sheet_limit(params, mesh, r).sup_joint());
            lattice.push_back(draw_sheet_limit_lattice(params, mesh, r).sup_joint());
        }
        CHECK(two_sample_ks(fast, lattice) < 0.06);
    }
    SUBCASE("sheet marginal at lambda = 1 is a standard Brownian motion") {
        const Vector lambdas = lambda_grid(0.15, 0.85, 8);
        const Index reps = 4000;
        double sum_sq = 0.0;
        for (Index r = 0; r < reps; ++r) {
            const Matrix inc = brownian_sheet_increments(200, lambdas, 11, r);
            const double w = inc.sum();
            sum_sq += w * w;
        }
        CHECK(std::abs(sum_sq / reps - 1.0) < 3.0 * std::sqrt(2.0 / reps));
    }
}

TEST_CASE("IVX sup-Wald limit") {
    SUBCASE("single lambda gives chi-squared with p + 1 degrees of freedom") {
        const Vector lambda = Vector::Constant(1, 0.5);
        std::vector<double> draws;
        for (Index r = 0; r < 100000; ++r) draws.push_back(draw_bridge_limit(lambda, 1, 12, r).joint());
        std::sort(draws.begin(), draws.end());
        CHECK(std::abs(quantile_sorted(draws, 0.95) - 5.991) < 0.3);
    }
    SUBCASE("draws are pivotal in c and phi") {
        FunctionalParams a, b;
        a.c = Vector::Constant(1, 1.0);
        b.c = Vector::Constant(1, 10.0);
        b.phi = Vector::Constant(1, 0.5);
        const MeshSpec mesh{100, 500, 13};
        CHECK(simulate_functional(Functional::SupWaldIVX_H2, a, mesh, 1) ==
              simulate_functional(Functional::SupWaldIVX_H2, b, mesh, 1));
    }
    SUBCASE("95% quantile is stable across disjoint seeds") {
        FunctionalParams params;
        params.p = 2;
        params.c = Vector::Ones(2);
        const auto t1 = tabulate_critical_values(Functional::SupWaldIVX_H2, params, {0.95}, {100, 100000, 14}, 1, 100);
        const auto t2 = tabulate_critical_values(Functional::SupWaldIVX_H2, params, {0.95}, {100, 100000, 15}, 1, 100);
        const double se = std::hypot(t1.std_errors[0], t2.std_errors[0]);
        CHECK(se > 0.0);
        CHECK(std::abs(t1.quantiles[0] - t2.quantiles[0]) < 2.0 * se);
    }
}

TEST_CASE("threshold argmax law") {
    SUBCASE("symmetric, light tailed and rarely truncated") {
        const Index reps = 10000;
        double sum = 0.0, sum_sq = 0.0;
        int far = 0, boundary = 0;
        std::vector<double> draws;
        for (Index r = 0; r < reps; ++r) {
            const auto [arg, at_edge] = two_sided_argmax(50.0, 0.01, 16, r);
            sum += arg;
            sum_sq += arg * arg;
            if (std::abs(arg) > 20.0) ++far;
            if (at_edge) ++boundary;
            draws.push_back(arg);
        }
        const double mean = sum / reps;
        const double sd = std::sqrt(sum_sq / reps - mean * mean);
        CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(reps)));
        // The exact tail P(|argmax| > 20) is just under 1%; the simulated
        // frequency must agree with it to three standard errors.
        const double tail = 2.0 * (1.0 - argmax_cdf(20.0));
        CHECK(tail < 0.01);
        CHECK(std::abs(far / static_cast<double>(reps) - tail) < 3.0 * std::sqrt(tail * (1.0 - tail) / reps));
        CHECK(boundary < reps / 100);

        std::sort(draws.begin(), draws.end());
        double ks = 0.0;
        for (std::size_t i = 0; i < draws.size(); ++i) {
            const double f = argmax_cdf(draws[i]);
            ks = std::max({ks, std::abs(f - static_cast<double>(i) / reps), std::abs(static_cast<double>(i + 1) / reps - f)});
        }
        CHECK(ks < 0.03);
    }
    SUBCASE("distribution function") {
        CHECK(argmax_cdf(0.0) == doctest::Approx(0.5));
        CHECK(argmax_cdf(-3.0) == doctest::Approx(1.0 - argmax_cdf(3.0)));
        CHECK(argmax_cdf(1000.0) == 1.0);
        double prev = 0.0;
        for (double x = -30.0; x <= 30.0; x += 0.5) {
            CHECK(argmax_cdf(x) >= prev);
            prev = argmax_cdf(x);
        }
    }
    SUBCASE("doubling delta0 quarters the scale") {
        ThresholdLimitParams a;
        a.c = Vector::Constant(1, 2.0);
        a.delta0 = Vector::Constant(1, 1.0);
        ThresholdLimitParams b = a;
        b.delta0 = Vector::Constant(1, 2.0);
        const MeshSpec mesh{500, 100, 17};
        for (Index r = 0; r < 20; ++r) {
            const auto da = draw_threshold_limit_raw(a, mesh, r);
            const auto db = draw_threshold_limit_raw(b, mesh, r);
            CHECK(db.scale == doctest::Approx(da.scale / 4.0).epsilon(1e-12));
            CHECK(db.value == doctest::Approx(da.value / 4.0).epsilon(1e-12));
        }
    }
    SUBCASE("short truncation is rejected") {
        ThresholdLimitParams params;
        params.truncation = 10.0;
        CHECK_THROWS_AS(draw_threshold_limit(params, MeshSpec{}, 0), Error);
    }
}

TEST_CASE("parallel_for") {
    std::vector<int> hits(1000, 0);
    parallel_for(1000, 4, [&](Index i) { hits[static_cast<std::size_t>(i)] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(parallel_for(100, 3,
                                 [&](Index i) {
                                     ++ran;
                                     if (i == 50) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("critical value tables") {
    SUBCASE("type-7 quantiles") {
        const std::vector<double> v = {1, 2, 3, 4, 5};
        CHECK(quantile_sorted(v, 0.5) == 3.0);
        CHECK(quantile_sorted(v, 0.9) == doctest::Approx(4.6));
        CHECK(quantile_sorted(v, 0.0) == 1.0);
        CHECK(quantile_sorted(v, 1.0) == 5.0);
    }
    SUBCASE("levels are normalized and quantiles increase") {
        FunctionalParams params;
        const MeshSpec mesh{100, 20000, 18};
        const auto table = tabulate_critical_values(Functional::SupWaldIVX_H2, params, {0.99, 0.9, 0.95, 0.9}, mesh, 2, 50);
        CHECK(table.levels == std::vector<double>{0.9, 0.95, 0.99});
        CHECK(table.quantiles[0] < table.quantiles[1]);
        CHECK(table.quantiles[1] < table.quantiles[2]);
        CHECK(table.reps == 20000);
        CHECK(table.std_errors.size() == 3);
        const auto again = tabulate_critical_values(Functional::SupWaldIVX_H2, params, {0.9, 0.95, 0.99}, mesh, 1, 50);
        CHECK(again.quantiles == table.quantiles);
        CHECK(again.std_errors == table.std_errors);
        CHECK(table.pvalue(table.quantiles[1]) == doctest::Approx(0.05).epsilon(0.01));
        CHECK(table.critical_value(0.95) == table.quantiles[1]);
        CHECK_THROWS_AS(tabulate_critical_values(Functional::SupWaldIVX_H2, params, {1.5}, mesh), Error);
    }
    SUBCASE("p-values interpolate when the draws are dropped") {
        CriticalValueTable t;
        t.levels = {0.9, 0.95, 0.99};
        t.quantiles = {4.0, 5.0, 7.0};
        CHECK(t.pvalue(3.0) == doctest::Approx(0.1));
        CHECK(t.pvalue(4.5) == doctest::Approx(0.075));
        CHECK(t.pvalue(9.0) == doctest::Approx(0.01));
        CHECK_THROWS_AS(t.critical_value(0.5), Error);
    }
    SUBCASE("functional names") {
        for (auto f : {Functional::SupWaldOLS_H1, Functional::SupWaldOLS_H2, Functional::SupWaldIVX_H1,
                       Functional::SupWaldIVX_H2, Functional::ThresholdArgmax}) {
            CHECK(parse_functional(to_string(f)) == f);
        }
        CHECK_THROWS_AS(parse_functional("nope"), Error);
    }
    SUBCASE("OLS limit needs c of length p") {
        FunctionalParams params;
        params.p = 2;
        CHECK_THROWS_AS(simulate_functional(Functional::SupWaldOLS_H1, params, {100, 100, 1}), Error);
    }
}
