// Command-line front end: simulate, estimate, test, ivx, fit-persistence,
// critvals, mc and analyze.

#include "tpr/dgp.hpp"
#include "tpr/estimate.hpp"
#include "tpr/io.hpp"
#include "tpr/ivx.hpp"
#include "tpr/limitsim.hpp"
#include "tpr/mc.hpp"
#include "tpr/persistence.hpp"
#include "tpr/wald.hpp"

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

namespace {

using tpr::Index;
using tpr::Matrix;
using tpr::Vector;
using json = nlohmann::json;

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(row);
    }
    return rows;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

/// Scalar lists broadcast to length p; longer lists must match p.
Vector broadcast(const std::vector<double>& v, Index p, const char* name) {
    if (v.size() == 1) return Vector::Constant(p, v.front());
    if (static_cast<Index>(v.size()) != p) {
        throw tpr::Error(tpr::ErrorKind::ConfigInvalid, std::string(name) + " needs 1 or " + std::to_string(p) + " values");
    }
    return to_vector(v);
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        tpr::write_file(out, text);
    }
}

/// Column names of the first non-comment line.
std::vector<std::string> header_columns(const std::string& path) {
    std::istringstream in(tpr::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            cols.push_back(cell);
        }
        return cols;
    }
    return {};
}

std::vector<std::string> matching(const std::vector<std::string>& cols, const std::string& pattern) {
    const std::regex re(pattern);
    std::vector<std::string> out;
    for (const auto& c : cols) {
        if (std::regex_match(c, re)) out.push_back(c);
    }
    return out;
}

struct DataOptions {
    std::string path;
    std::string y = "y";
    std::vector<std::string> x;
    std::string q = "q";
    std::string date;
    std::vector<std::string> u_phi;
    bool no_intercept = false;
    double pi1 = tpr::kDefaultTrimLower;
    double pi2 = tpr::kDefaultTrimUpper;

    void attach(CLI::App* sub) {
        sub->add_option("--data", path, "CSV file")->required();
        sub->add_option("--y", y, "response column");
        sub->add_option("--x", x, "regressor columns (default: every column named x1, x2, ...)");
        sub->add_option("--q", q, "threshold-variable column");
        sub->add_option("--date", date, "date column");
        sub->add_option("--uphi", u_phi, "perturbation-shock columns (default: every column named uphi1, ...)");
        sub->add_flag("--no-intercept", no_intercept, "fit without regime intercepts");
        sub->add_option("--pi1", pi1, "lower trimming quantile");
        sub->add_option("--pi2", pi2, "upper trimming quantile");
    }

    tpr::EmpiricalDataset load() const {
        const auto cols = header_columns(path);
        tpr::ColumnMapping m;
        m.y = y;
        m.q = q;
        m.date = date;
        m.x = x.empty() ? matching(cols, "x[0-9]+") : x;
        if (m.x.empty()) m.x = {"x1"};
        m.u_phi = u_phi.empty() ? matching(cols, "uphi[0-9]+") : u_phi;
        m.intercept = !no_intercept;
        return tpr::parse_dataset(path, m);
    }
};

struct TableOptions {
    Index reps = 10000;
    Index steps = 2000;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    void attach(CLI::App* sub) {
        sub->add_option("--reps", reps, "limit draws for p-values");
        sub->add_option("--steps", steps, "Euler steps for limit draws");
        sub->add_option("--seed", seed, "seed for limit draws");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    }
    tpr::MeshSpec mesh() const { return {steps, reps, seed}; }
};

/// Settings of the selected subcommand: given values, otherwise defaults.
tpr::Provenance provenance(const CLI::App& app, std::uint64_t seed) {
    json config = json::object();
    for (const auto* sub : app.get_subcommands()) {
        json opts = json::object();
        for (const auto* opt : sub->get_options()) {
            if (opt->get_single_name() == "help" || opt->get_single_name() == "out") continue;
            if (opt->count() > 0) {
                const auto& r = opt->results();
                opts[opt->get_single_name()] = r.size() == 1 ? json(r.front()) : json(r);
            } else if (!opt->get_default_str().empty()) {
                opts[opt->get_single_name()] = opt->get_default_str();
            }
        }
        config[sub->get_name()] = opts;
    }
    return tpr::make_provenance(config, seed);
}

/// p-value of a sup-Wald statistic, or a reason why none is available.
struct PValue {
    json value = nullptr;
    std::string source;
};

PValue sup_pvalue(double stat, tpr::HypothesisKind kind, tpr::Estimator est, Index p, bool intercept,
                  const std::optional<Vector>& c, const Vector& phi, double pi1, double pi2,
                  const TableOptions& topt, bool required) {
    tpr::FunctionalParams fp;
    fp.p = p;
    fp.pi1 = pi1;
    fp.pi2 = pi2;
    fp.intercept = intercept;
    tpr::Functional f;
    const bool linearity = kind == tpr::HypothesisKind::LinearityOnly;
    if (est == tpr::Estimator::IVX) {
        f = linearity ? tpr::Functional::SupWaldIVX_H1 : tpr::Functional::SupWaldIVX_H2;
    } else {
        if (!c) {
            if (required) {
                throw tpr::Error(tpr::ErrorKind::MissingCriticalValues,
                                 "OLS sup-Wald limit depends on (c, phi); pass --c and --phi");
            }
            return {nullptr, "unavailable: OLS limit depends on (c, phi); pass --c and --phi"};
        }
        f = linearity ? tpr::Functional::SupWaldOLS_H1 : tpr::Functional::SupWaldOLS_H2;
        fp.c = *c;
        fp.phi = phi;
        fp.cov = tpr::CovarianceSpec::identity(p, phi.size());
    }
    const auto table = tpr::tabulate_critical_values(f, fp, {0.9, 0.95, 0.99}, topt.mesh(), topt.threads, 0);
    return {table.pvalue(stat), std::string(tpr::to_string(f)) + " limit, reps=" + std::to_string(topt.reps) +
                                    ", seed=" + std::to_string(topt.seed)};
}

json curve_record(const tpr::WaldCurve& curve, const PValue& pv) {
    return {{"hypothesis", std::string(tpr::to_string(curve.hypothesis))},
            {"estimator", std::string(tpr::to_string(curve.estimator))},
            {"sup", curve.sup_stat},
            {"argmax", curve.argmax_gamma},
            {"dof", curve.dof},
            {"grid", to_json(curve.gammas)},
            {"curve", to_json(curve.values)},
            {"skipped", curve.skipped},
            {"pvalue", pv.value},
            {"pvalue_source", pv.source}};
}

int exit_code(tpr::ErrorCategory c) {
    switch (c) {
        case tpr::ErrorCategory::Config: return 2;
        case tpr::ErrorCategory::Data: return 3;
        case tpr::ErrorCategory::Numerical: return 4;
        case tpr::ErrorCategory::MissingCriticalValues: return 5;
    }
    return 4;
}

std::string_view category_name(tpr::ErrorCategory c) {
    switch (c) {
        case tpr::ErrorCategory::Config: return "config";
        case tpr::ErrorCategory::Data: return "data";
        case tpr::ErrorCategory::Numerical: return "numerical";
        case tpr::ErrorCategory::MissingCriticalValues: return "missing-critical-values";
    }
    return "numerical";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Threshold predictive regression with stochastic local unit root regressors"};
    app.set_config("--config", "", "TOML configuration file; flags override its values");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    std::function<void()> action;

    // simulate
    struct {
        std::string preset = "paper-section-4";
        Index n = 250;
        std::uint64_t seed = 1;
        Index p = 0;
        double c = 1.0;
        double phi = 0.0;
        double endogeneity = 0.0;
        std::optional<double> tau;
        std::optional<double> delta0;
        double gamma0 = 0.25;
        bool no_intercept = false;
        std::string form = "exact";
        std::string out;
    } sim;
    auto* simulate = app.add_subcommand("simulate", "simulate a threshold predictive regression sample");
    simulate->add_option("--preset", sim.preset, "paper-section-4 or null")
        ->check(CLI::IsMember({"paper-section-4", "null"}));
    simulate->add_option("--n", sim.n, "sample size");
    simulate->add_option("--seed", sim.seed, "random seed");
    simulate->add_option("--p", sim.p, "number of regressors (preset default when 0)");
    simulate->add_option("--c", sim.c, "localizing coefficient");
    simulate->add_option("--phi", sim.phi, "loading of the perturbation shock");
    simulate->add_option("--endogeneity", sim.endogeneity, "correlation of u_y with every u_x");
    simulate->add_option("--tau", sim.tau, "diminishing-effect exponent");
    simulate->add_option("--delta0", sim.delta0, "regime-1 slope scale");
    simulate->add_option("--gamma0", sim.gamma0, "true threshold");
    simulate->add_flag("--no-intercept", sim.no_intercept, "no intercept in the model");
    simulate->add_option("--form", sim.form, "exact or expanded")->check(CLI::IsMember({"exact", "expanded"}));
    simulate->add_option("--out", sim.out, "output CSV")->required();
    simulate->callback([&] {
        action = [&] {
            const bool preset = sim.preset == "paper-section-4";
            const Index p = sim.p > 0 ? sim.p : (preset ? 2 : 1);
            tpr::ThresholdDgpSpec dgp = preset ? tpr::ThresholdDgpSpec::standard_design(p) : tpr::ThresholdDgpSpec::null_model(p);
            if (sim.delta0) dgp.delta0 = Vector::Constant(p, *sim.delta0);
            if (sim.tau) dgp.tau = *sim.tau;
            dgp.gamma0 = sim.gamma0;
            dgp.has_intercept = !sim.no_intercept;
            tpr::PersistenceSpec pers;
            pers.c = Vector::Constant(p, sim.c);
            pers.phi = Vector::Constant(1, sim.phi);
            pers.form = sim.form == "exact" ? tpr::CoefficientForm::ExactExponential : tpr::CoefficientForm::ExpandedQuadratic;
            const auto cov = tpr::CovarianceSpec::with_endogeneity(p, 1, sim.endogeneity);
            const auto s = tpr::simulate_threshold_sample(dgp, pers, cov, sim.n, sim.seed);
            std::ostringstream os;
            tpr::write_simulated_csv(os, s, provenance(app, sim.seed));
            emit(sim.out, os.str());
        };
    });

    // estimate
    DataOptions est_data;
    std::string est_out;
    auto* estimate = app.add_subcommand("estimate", "estimate the threshold and regime coefficients by OLS");
    est_data.attach(estimate);
    estimate->add_option("--out", est_out, "output JSON (default stdout)");
    estimate->callback([&] {
        action = [&] {
            const auto ds = est_data.load();
            const auto grid = tpr::make_grid(ds.sample, est_data.pi1, est_data.pi2);
            const auto fit = tpr::estimate_threshold(ds.sample, grid);
            json doc = {{"provenance", provenance(app, 0).to_json()},
                        {"schema", "tpr.estimate/1"},
                        {"n", ds.sample.n()},
                        {"p", ds.sample.p()},
                        {"intercept", ds.sample.has_intercept},
                        {"gamma_hat", fit.gamma_hat},
                        {"gamma_index", fit.gamma_index},
                        {"theta_hat", to_json(fit.theta_hat)},
                        {"ssr", fit.ssr},
                        {"sigma2_hat", fit.sigma2_hat},
                        {"grid", {{"pi1", grid.pi1}, {"pi2", grid.pi2}, {"min_regime", grid.min_regime},
                                  {"points", to_json(grid.points)}}},
                        {"ssr_curve", to_json(fit.ssr_curve)}};
            emit(est_out, doc.dump(2) + "\n");
        };
    });

    // test
    DataOptions test_data;
    TableOptions test_tables;
    struct {
        std::string hypothesis = "joint";
        std::string estimator = "both";
        double cz = 1.0;
        double gammaz = 0.95;
        bool corrected = false;
        std::vector<double> c;
        std::vector<double> phi = {0.0};
        bool no_pvalues = false;
        bool require_pvalues = false;
        std::string out;
    } topt;
    auto* test = app.add_subcommand("test", "sup-Wald tests for a threshold effect and predictability");
    test_data.attach(test);
    test_tables.attach(test);
    test->add_option("--hypothesis", topt.hypothesis, "linearity or joint")->check(CLI::IsMember({"linearity", "joint"}));
    test->add_option("--estimator", topt.estimator, "ols, ivx or both")->check(CLI::IsMember({"ols", "ivx", "both"}));
    test->add_option("--cz", topt.cz, "IVX c_z");
    test->add_option("--gammaz", topt.gammaz, "IVX gamma_z");
    test->add_flag("--ivx-corrected", topt.corrected, "use the corrected instrument (needs uphi columns, --c, --phi)");
    test->add_option("--c", topt.c, "localizing coefficient(s) for OLS p-values");
    test->add_option("--phi", topt.phi, "perturbation loading(s) for OLS p-values");
    test->add_flag("--no-pvalues", topt.no_pvalues, "skip limit simulations");
    test->add_flag("--require-pvalues", topt.require_pvalues, "fail when a p-value is unavailable");
    test->add_option("--out", topt.out, "output JSON (default stdout)");
    test->callback([&] {
        action = [&] {
            const auto ds = test_data.load();
            const Index p = ds.sample.p();
            const auto grid = tpr::make_grid(ds.sample, test_data.pi1, test_data.pi2);
            const tpr::IvxConfig cfg{topt.cz, topt.gammaz};
            const auto kind = tpr::parse_hypothesis(topt.hypothesis);
            std::optional<Vector> c;
            if (!topt.c.empty()) c = broadcast(topt.c, p, "--c");
            const Vector phi = to_vector(topt.phi);
            std::optional<Matrix> instrument;
            if (topt.corrected) {
                if (!c) throw tpr::Error(tpr::ErrorKind::ConfigInvalid, "--ivx-corrected needs --c and --phi");
                tpr::PersistenceSpec spec;
                spec.c = *c;
                spec.phi = phi;
                instrument = tpr::corrected_sample_instrument(tpr::dataset_path(ds, spec), cfg);
            }
            json records = json::array();
            for (auto est : {tpr::Estimator::OLS, tpr::Estimator::IVX}) {
                if (topt.estimator != "both" && tpr::parse_estimator(topt.estimator) != est) continue;
                const auto curve = tpr::sup_wald(ds.sample, grid, kind, est, cfg, instrument);
                PValue pv{nullptr, "not requested"};
                if (!topt.no_pvalues) {
                    pv = sup_pvalue(curve.sup_stat, kind, est, p, ds.sample.has_intercept, c, phi, test_data.pi1,
                                    test_data.pi2, test_tables, topt.require_pvalues);
                }
                records.push_back(curve_record(curve, pv));
            }
            json doc = {{"provenance", provenance(app, test_tables.seed).to_json()},
                        {"schema", "tpr.test/1"},
                        {"n", ds.sample.n()},
                        {"ivx_corrected", topt.corrected},
                        {"results", records}};
            emit(topt.out, doc.dump(2) + "\n");
        };
    });

    // ivx
    DataOptions ivx_data;
    struct {
        std::optional<double> gamma;
        double cz = 1.0;
        double gammaz = 0.95;
        bool corrected = false;
        std::vector<double> c;
        std::vector<double> phi = {0.0};
        std::string out;
    } iopt;
    auto* ivx = app.add_subcommand("ivx", "IVX regime estimates at a threshold");
    ivx_data.attach(ivx);
    ivx->add_option("--gamma", iopt.gamma, "threshold (default: OLS estimate)");
    ivx->add_option("--cz", iopt.cz, "IVX c_z");
    ivx->add_option("--gammaz", iopt.gammaz, "IVX gamma_z");
    ivx->add_flag("--ivx-corrected", iopt.corrected, "use the corrected instrument (needs uphi columns, --c, --phi)");
    ivx->add_option("--c", iopt.c, "localizing coefficient(s) for the corrected instrument");
    ivx->add_option("--phi", iopt.phi, "perturbation loading(s) for the corrected instrument");
    ivx->add_option("--out", iopt.out, "output JSON (default stdout)");
    ivx->callback([&] {
        action = [&] {
            const auto ds = ivx_data.load();
            const tpr::IvxConfig cfg{iopt.cz, iopt.gammaz};
            double gamma = 0.0;
            if (iopt.gamma) {
                gamma = *iopt.gamma;
            } else {
                gamma = tpr::estimate_threshold(ds.sample, tpr::make_grid(ds.sample, ivx_data.pi1, ivx_data.pi2)).gamma_hat;
            }
            Matrix z = tpr::sample_instrument(ds.sample, cfg);
            if (iopt.corrected) {
                if (iopt.c.empty()) throw tpr::Error(tpr::ErrorKind::ConfigInvalid, "--ivx-corrected needs --c and --phi");
                tpr::PersistenceSpec spec;
                spec.c = broadcast(iopt.c, ds.sample.p(), "--c");
                spec.phi = to_vector(iopt.phi);
                z = tpr::corrected_sample_instrument(tpr::dataset_path(ds, spec), cfg);
            }
            const auto fit = tpr::ivx_fit(ds.sample, gamma, z, iopt.corrected);
            const double wald = tpr::wald_ivx(ds.sample, gamma, tpr::HypothesisKind::RegimeSlopesZero, z);
            const boost::math::chi_squared_distribution<double> chi(static_cast<double>(2 * ds.sample.p()));
            json doc = {{"provenance", provenance(app, 0).to_json()},
                        {"schema", "tpr.ivx/1"},
                        {"gamma", gamma},
                        {"beta", to_json(fit.beta)},
                        {"alpha", to_json(fit.alpha)},
                        {"avar", to_json(fit.avar)},
                        {"sigma2", fit.sigma2},
                        {"corrected", fit.corrected},
                        {"wald_slopes_zero", wald},
                        {"wald_dof", 2 * ds.sample.p()},
                        {"wald_pvalue_chi2", boost::math::cdf(boost::math::complement(chi, wald))}};
            emit(iopt.out, doc.dump(2) + "\n");
        };
    });

    // fit-persistence
    DataOptions fp_data;
    struct {
        std::string column;
        double c0 = 0.0;
        std::vector<double> phi0;
        tpr::PersistenceBounds bounds;
        std::string out;
    } fopt;
    auto* fitp = app.add_subcommand("fit-persistence", "NLLS fit of (c, phi) for one regressor");
    fp_data.attach(fitp);
    fitp->add_option("--column", fopt.column, "regressor column to fit (default: first regressor)");
    fitp->add_option("--c0", fopt.c0, "initial c");
    fitp->add_option("--phi0", fopt.phi0, "initial phi (one per uphi column, default 0)");
    fitp->add_option("--c-min", fopt.bounds.c_lo, "lower bound for c");
    fitp->add_option("--c-max", fopt.bounds.c_hi, "upper bound for c");
    fitp->add_option("--phi-min", fopt.bounds.phi_lo, "lower bound for each phi");
    fitp->add_option("--phi-max", fopt.bounds.phi_hi, "upper bound for each phi");
    fitp->add_option("--out", fopt.out, "output JSON (default stdout)");
    fitp->callback([&] {
        action = [&] {
            const auto ds = fp_data.load();
            if (ds.u_phi.size() == 0) throw tpr::Error(tpr::ErrorKind::MissingExogenousDraws, "no uphi columns in the data");
            Index col = 0;
            if (!fopt.column.empty()) {
                const auto& names = ds.mapping.x;
                const auto it = std::find(names.begin(), names.end(), fopt.column);
                if (it == names.end()) throw tpr::Error(tpr::ErrorKind::MissingColumn, "column '" + fopt.column + "' is not a regressor");
                col = static_cast<Index>(it - names.begin());
            }
            const Index d = ds.u_phi.cols();
            const Vector phi0 = fopt.phi0.empty() ? Vector::Zero(d) : broadcast(fopt.phi0, d, "--phi0");
            const auto fit = tpr::fit_persistence(ds.x_path.col(col), ds.u_phi, fopt.c0, phi0, fopt.bounds);
            json doc = {{"provenance", provenance(app, 0).to_json()},
                        {"schema", "tpr.persistence/1"},
                        {"column", ds.mapping.x[static_cast<std::size_t>(col)]},
                        {"c_hat", fit.c_hat},
                        {"phi_hat", to_json(fit.phi_hat)},
                        {"objective", fit.objective},
                        {"converged", fit.converged},
                        {"iterations", fit.iterations},
                        {"used_grid_fallback", fit.used_grid_fallback},
                        {"trace", fit.trace},
                        {"warning", fit.warning ? json(std::string(tpr::to_string(*fit.warning))) : json(nullptr)}};
            emit(fopt.out, doc.dump(2) + "\n");
        };
    });

    // critvals
    struct {
        std::string functional = "ivx-h2";
        Index p = 1;
        std::vector<double> c = {1.0};
        std::vector<double> phi = {0.0};
        double pi1 = 0.15;
        double pi2 = 0.85;
        Index lambda_points = 71;
        bool no_intercept = false;
        std::vector<double> delta0 = {1.0};
        double f_gamma0 = 1.0;
        double sigma_u = 1.0;
        double truncation = 50.0;
        std::vector<double> levels = {0.90, 0.95, 0.99};
        Index bootstrap = 200;
        std::string format;
        std::string out;
    } copt;
    TableOptions crit_tables;
    auto* critvals = app.add_subcommand("critvals", "tabulate critical values of a limit functional");
    critvals->add_option("--functional", copt.functional, "ols-h1, ols-h2, ivx-h1, ivx-h2 or threshold-argmax")
        ->check(CLI::IsMember({"ols-h1", "ols-h2", "ivx-h1", "ivx-h2", "threshold-argmax"}));
    critvals->add_option("--p", copt.p, "number of regressors");
    critvals->add_option("--c", copt.c, "localizing coefficient(s)");
    critvals->add_option("--phi", copt.phi, "perturbation loading(s)");
    critvals->add_option("--pi1", copt.pi1, "lower trimming");
    critvals->add_option("--pi2", copt.pi2, "upper trimming");
    critvals->add_option("--lambda-points", copt.lambda_points, "points of the lambda grid");
    critvals->add_flag("--no-intercept", copt.no_intercept, "limit without intercept");
    critvals->add_option("--delta0", copt.delta0, "threshold effect (threshold-argmax)");
    critvals->add_option("--f-gamma0", copt.f_gamma0, "threshold density at gamma0 (threshold-argmax)");
    critvals->add_option("--sigma-u", copt.sigma_u, "error scale (threshold-argmax)");
    critvals->add_option("--truncation", copt.truncation, "two-sided truncation T (threshold-argmax)");
    critvals->add_option("--levels", copt.levels, "quantile levels");
    critvals->add_option("--bootstrap", copt.bootstrap, "bootstrap resamples for standard errors");
    critvals->add_option("--format", copt.format, "csv or json (default from the file extension)")
        ->check(CLI::IsMember({"csv", "json"}));
    critvals->add_option("--out", copt.out, "output file")->required();
    crit_tables.attach(critvals);
    critvals->callback([&] {
        action = [&] {
            tpr::FunctionalParams fp;
            fp.p = copt.p;
            fp.c = broadcast(copt.c, copt.p, "--c");
            fp.phi = to_vector(copt.phi);
            fp.cov = tpr::CovarianceSpec::identity(copt.p, fp.phi.size());
            fp.pi1 = copt.pi1;
            fp.pi2 = copt.pi2;
            fp.lambda_points = copt.lambda_points;
            fp.intercept = !copt.no_intercept;
            fp.delta0 = broadcast(copt.delta0, copt.p, "--delta0");
            fp.f_gamma0 = copt.f_gamma0;
            fp.sigma_u = copt.sigma_u;
            fp.truncation = copt.truncation;
            const auto f = tpr::parse_functional(copt.functional);
            const auto table = tpr::tabulate_critical_values(f, fp, copt.levels, crit_tables.mesh(), crit_tables.threads,
                                                             copt.bootstrap);
            const auto prov = provenance(app, crit_tables.seed);
            const std::string format =
                !copt.format.empty() ? copt.format : (copt.out.ends_with(".json") ? std::string("json") : std::string("csv"));
            std::ostringstream os;
            if (format == "json") {
                json rows = json::array();
                for (std::size_t i = 0; i < table.levels.size(); ++i) {
                    rows.push_back({{"level", table.levels[i]}, {"quantile", table.quantiles[i]},
                                    {"std_error", table.std_errors[i]}});
                }
                json doc = {{"provenance", prov.to_json()},
                            {"schema", "tpr.critvals/1"},
                            {"functional", copt.functional},
                            {"p", copt.p},
                            {"c", to_json(fp.c)},
                            {"phi", to_json(fp.phi)},
                            {"trimming", {copt.pi1, copt.pi2}},
                            {"intercept", fp.intercept},
                            {"reps", table.reps},
                            {"steps", table.steps},
                            {"seed", table.seed},
                            {"build_version", table.version},
                            {"quantiles", rows}};
                os << doc.dump(2) << '\n';
            } else {
                os << tpr::provenance_csv_header(prov);
                os << "# functional: " << copt.functional << "\n# reps: " << table.reps << "\n# steps: " << table.steps
                   << "\n# build_version: " << table.version << '\n';
                os << "level,quantile,std_error\n";
                for (std::size_t i = 0; i < table.levels.size(); ++i) {
                    os << tpr::format_double(table.levels[i]) << ',' << tpr::format_double(table.quantiles[i]) << ','
                       << tpr::format_double(table.std_errors[i]) << '\n';
                }
            }
            emit(copt.out, os.str());
        };
    });

    // mc
    struct {
        std::string kind = "size";
        std::string preset = "paper-section-4";
        std::string test = "wald-at-threshold";
        Index B = 0;
        std::vector<Index> n;
        std::vector<double> c;
        std::vector<double> phi;
        std::vector<double> levels;
        std::vector<std::string> estimators;
        Index p = 0;
        double endogeneity = 0.0;
        double delta0 = 2.0;
        double tau = 0.25;
        std::uint64_t seed = 20240101;
        unsigned threads = 0;
        Index table_reps = 10000;
        Index table_steps = 2000;
        std::string out;
    } mopt;
    auto* mc = app.add_subcommand("mc", "Monte Carlo accuracy, size and power experiments");
    auto* mc_kind = mc->add_option("--kind", mopt.kind, "accuracy, size or power")->check(CLI::IsMember({"accuracy", "size", "power"}));
    mc->add_option("--preset", mopt.preset, "paper-section-4 or custom")->check(CLI::IsMember({"paper-section-4", "custom"}));
    auto* mc_test = mc->add_option("--test", mopt.test, "wald-at-threshold, sup-h1 or sup-h2")
                        ->check(CLI::IsMember({"wald-at-threshold", "sup-h1", "sup-h2"}));
    auto* mc_b = mc->add_option("--B", mopt.B, "replications per cell");
    auto* mc_n = mc->add_option("--n", mopt.n, "sample sizes");
    auto* mc_c = mc->add_option("--c", mopt.c, "localizing coefficients");
    auto* mc_phi = mc->add_option("--phi", mopt.phi, "perturbation loadings");
    auto* mc_levels = mc->add_option("--levels", mopt.levels, "nominal levels");
    auto* mc_est = mc->add_option("--estimators", mopt.estimators, "ols and/or ivx");
    auto* mc_p = mc->add_option("--p", mopt.p, "number of regressors");
    auto* mc_endo = mc->add_option("--endogeneity", mopt.endogeneity, "correlation of u_y with every u_x");
    auto* mc_delta = mc->add_option("--delta0", mopt.delta0, "regime-1 slope scale");
    auto* mc_tau = mc->add_option("--tau", mopt.tau, "diminishing-effect exponent");
    mc->add_option("--seed", mopt.seed, "experiment seed");
    mc->add_option("--threads", mopt.threads, "worker threads (0 = all cores)");
    mc->add_option("--table-reps", mopt.table_reps, "limit draws per critical-value table");
    mc->add_option("--table-steps", mopt.table_steps, "Euler steps per limit draw");
    mc->add_option("--out", mopt.out, "output directory")->required();
    (void)mc_kind;
    (void)mc_test;
    mc->callback([&] {
        action = [&] {
            const auto kind = tpr::parse_experiment_kind(mopt.kind);
            tpr::ExperimentSpec spec =
                mopt.preset == "paper-section-4" ? tpr::ExperimentSpec::standard_design(kind) : tpr::ExperimentSpec{};
            spec.kind = kind;
            spec.test = tpr::parse_test_procedure(mopt.test);
            if (mc_b->count() > 0) spec.B = mopt.B;
            if (mc_n->count() > 0) spec.n_list = mopt.n;
            if (mc_c->count() > 0) spec.c_list = mopt.c;
            if (mc_phi->count() > 0) spec.phi_list = mopt.phi;
            if (mc_levels->count() > 0) spec.nominal_levels = mopt.levels;
            if (mc_est->count() > 0) {
                spec.estimators.clear();
                for (const auto& e : mopt.estimators) spec.estimators.push_back(tpr::parse_estimator(e));
            }
            if (mc_p->count() > 0) spec.p = mopt.p;
            if (mc_endo->count() > 0) spec.endogeneity = mopt.endogeneity;
            if (mc_delta->count() > 0) spec.delta0 = mopt.delta0;
            if (mc_tau->count() > 0) spec.tau = mopt.tau;
            spec.seed = mopt.seed;
            spec.table_mesh = {mopt.table_steps, mopt.table_reps, mopt.seed};
            const auto result = tpr::run_experiment(spec, mopt.threads);
            std::filesystem::create_directories(mopt.out);
            const std::filesystem::path dir(mopt.out);
            tpr::write_file((dir / "results.csv").string(), tpr::summarize(result, tpr::ReportFormat::Csv));
            tpr::write_file((dir / "results.json").string(), tpr::summarize(result, tpr::ReportFormat::Json));
            tpr::write_file((dir / "summary.md").string(), tpr::summarize(result, tpr::ReportFormat::Markdown));
            std::cout << tpr::summarize(result, tpr::ReportFormat::Markdown);
        };
    });

    // analyze
    DataOptions an_data;
    TableOptions an_tables;
    struct {
        std::vector<double> c;
        std::vector<double> phi = {0.0};
        double cz = 1.0;
        double gammaz = 0.95;
        std::string out;
    } aopt;
    auto* analyze = app.add_subcommand("analyze", "threshold estimate plus OLS and IVX tests with p-values");
    an_data.attach(analyze);
    an_tables.attach(analyze);
    analyze->add_option("--c", aopt.c, "localizing coefficient(s) for OLS p-values");
    analyze->add_option("--phi", aopt.phi, "perturbation loading(s) for OLS p-values");
    analyze->add_option("--cz", aopt.cz, "IVX c_z");
    analyze->add_option("--gammaz", aopt.gammaz, "IVX gamma_z");
    analyze->add_option("--out", aopt.out, "output JSON (default stdout)");
    analyze->callback([&] {
        action = [&] {
            const auto ds = an_data.load();
            const Index p = ds.sample.p();
            const auto grid = tpr::make_grid(ds.sample, an_data.pi1, an_data.pi2);
            const auto fit = tpr::estimate_threshold(ds.sample, grid);
            const tpr::IvxConfig cfg{aopt.cz, aopt.gammaz};
            std::optional<Vector> c;
            if (!aopt.c.empty()) c = broadcast(aopt.c, p, "--c");
            const Vector phi = to_vector(aopt.phi);
            json tests = json::array();
            for (auto kind : {tpr::HypothesisKind::LinearityOnly, tpr::HypothesisKind::JointLinearityPredictability}) {
                for (auto est : {tpr::Estimator::OLS, tpr::Estimator::IVX}) {
                    const auto curve = tpr::sup_wald(ds.sample, grid, kind, est, cfg);
                    const auto pv = sup_pvalue(curve.sup_stat, kind, est, p, ds.sample.has_intercept, c, phi,
                                               an_data.pi1, an_data.pi2, an_tables, false);
                    tests.push_back(curve_record(curve, pv));
                }
            }
            json at_threshold = json::array();
            const boost::math::chi_squared_distribution<double> chi(static_cast<double>(2 * p));
            for (auto est : {tpr::Estimator::OLS, tpr::Estimator::IVX}) {
                const auto w = tpr::wald_at_estimated_threshold(ds.sample, grid, est, cfg);
                at_threshold.push_back({{"estimator", std::string(tpr::to_string(est))},
                                        {"statistic", w.statistic},
                                        {"gamma_hat", w.gamma_hat},
                                        {"dof", w.dof},
                                        {"pvalue_chi2", boost::math::cdf(boost::math::complement(chi, w.statistic))}});
            }
            json doc = {{"provenance", provenance(app, an_tables.seed).to_json()},
                        {"schema", "tpr.analyze/1"},
                        {"n", ds.sample.n()},
                        {"first_date", ds.dates.empty() ? json(nullptr) : json(ds.dates.front())},
                        {"last_date", ds.dates.empty() ? json(nullptr) : json(ds.dates.back())},
                        {"threshold", {{"gamma_hat", fit.gamma_hat}, {"theta_hat", to_json(fit.theta_hat)},
                                       {"sigma2_hat", fit.sigma2_hat}, {"ssr", fit.ssr}}},
                        {"sup_wald", tests},
                        {"wald_at_threshold", at_threshold}};
            emit(aopt.out, doc.dump(2) + "\n");
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (action) action();
        return 0;
    } catch (const tpr::Error& e) {
        const json err = {{"error", std::string(tpr::to_string(e.kind()))},
                          {"category", std::string(category_name(e.category()))},
                          {"message", e.what()}};
        std::cerr << err.dump() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        const json err = {{"error", "Internal"}, {"category", "numerical"}, {"message", e.what()}};
        std::cerr << err.dump() << '\n';
        return 4;
    }
}
