#include "tpr/mc.hpp"

#include "tpr/estimate.hpp"
#include "tpr/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace tpr {

std::string_view to_string(ExperimentKind k) noexcept {
    switch (k) {
        case ExperimentKind::ThresholdAccuracy: return "accuracy";
        case ExperimentKind::Size: return "size";
        case ExperimentKind::Power: return "power";
    }
    return "unknown";
}

std::string_view to_string(TestProcedure t) noexcept {
    switch (t) {
        case TestProcedure::WaldAtEstimatedThreshold: return "wald-at-threshold";
        case TestProcedure::SupWaldLinearity: return "sup-h1";
        case TestProcedure::SupWaldJoint: return "sup-h2";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
    for (auto k : {ExperimentKind::ThresholdAccuracy, ExperimentKind::Size, ExperimentKind::Power}) {
        if (text == to_string(k)) return k;
    }
    throw Error(ErrorKind::ConfigInvalid, "unknown experiment kind '" + std::string(text) + "'");
}

TestProcedure parse_test_procedure(std::string_view text) {
    for (auto t : {TestProcedure::WaldAtEstimatedThreshold, TestProcedure::SupWaldLinearity,
                   TestProcedure::SupWaldJoint}) {
        if (text == to_string(t)) return t;
    }
    throw Error(ErrorKind::ConfigInvalid, "unknown test '" + std::string(text) + "'");
}

void ExperimentSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
    if (n_list.empty() || c_list.empty() || phi_list.empty()) fail("n, c and phi lists must be non-empty");
    for (Index n : n_list) {
        if (n < 20) fail("sample sizes must be at least 20");
    }
    if (B < 1) fail("B must be positive");
    if (p < 1) fail("p must be positive");
    if (kind != ExperimentKind::ThresholdAccuracy) {
        if (nominal_levels.empty()) fail("no nominal levels");
        for (double l : nominal_levels) {
            if (!(l > 0.0 && l < 1.0)) fail("nominal levels must lie in (0,1)");
        }
        if (estimators.empty()) fail("no estimators");
    }
    if (!(std::abs(endogeneity) < 1.0)) fail("endogeneity must lie in (-1,1)");
    if (!(tau >= 0.0 && tau < 0.5)) fail("tau must lie in [0, 1/2)");
    if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0)) fail("max_failure_rate must lie in [0,1)");
    if (!(pi1 > 0.0 && pi1 < pi2 && pi2 < 1.0)) fail("trimming must satisfy 0 < pi1 < pi2 < 1");
    try {
        ivx.validate();
    } catch (const Error& e) {
        fail(e.what());
    }
}

nlohmann::json ExperimentSpec::to_json() const {
    nlohmann::json est = nlohmann::json::array();
    for (Estimator e : estimators) est.push_back(std::string(tpr::to_string(e)));
    return {{"kind", std::string(tpr::to_string(kind))},
            {"test", std::string(tpr::to_string(test))},
            {"preset", preset},
            {"n_list", n_list},
            {"c_list", c_list},
            {"phi_list", phi_list},
            {"B", B},
            {"nominal_levels", nominal_levels},
            {"estimators", est},
            {"p", p},
            {"intercept", intercept},
            {"endogeneity", endogeneity},
            {"delta0", delta0},
            {"tau", tau},
            {"gamma0", gamma0},
            {"form", form == CoefficientForm::ExactExponential ? "exact" : "expanded"},
            {"c_z", ivx.c_z},
            {"gamma_z", ivx.gamma_z},
            {"pi1", pi1},
            {"pi2", pi2},
            {"seed", seed},
            {"max_failure_rate", max_failure_rate},
            {"table_steps", table_mesh.steps},
            {"table_reps", table_mesh.reps},
            {"table_seed", table_mesh.seed}};
}

ExperimentSpec ExperimentSpec::standard_design(ExperimentKind kind) {
    ExperimentSpec s;
    s.kind = kind;
    s.preset = "paper-section-4";
    s.B = kind == ExperimentKind::ThresholdAccuracy ? 5000 : 1000;
    if (kind == ExperimentKind::ThresholdAccuracy) s.tau = 0.0;
    return s;
}

namespace {

struct CellDesign {
    Index n;
    double c;
    double phi;
    std::uint64_t seed;
};

ThresholdDgpSpec cell_dgp(const ExperimentSpec& spec) {
    ThresholdDgpSpec dgp = ThresholdDgpSpec::null_model(spec.p);
    dgp.gamma0 = spec.gamma0;
    dgp.has_intercept = spec.intercept;
    if (spec.kind != ExperimentKind::Size) {
        dgp.delta0 = Vector::Constant(spec.p, spec.delta0);
        dgp.tau = spec.tau;
    }
    return dgp;
}

PersistenceSpec cell_persistence(const ExperimentSpec& spec, double c, double phi) {
    PersistenceSpec pers;
    pers.c = Vector::Constant(spec.p, c);
    pers.phi = Vector::Constant(1, phi);
    pers.form = spec.form;
    return pers;
}

Functional functional_for(TestProcedure test, Estimator e) {
    if (test == TestProcedure::SupWaldLinearity) {
        return e == Estimator::OLS ? Functional::SupWaldOLS_H1 : Functional::SupWaldIVX_H1;
    }
    return e == Estimator::OLS ? Functional::SupWaldOLS_H2 : Functional::SupWaldIVX_H2;
}

HypothesisKind hypothesis_for(TestProcedure test) {
    return test == TestProcedure::SupWaldLinearity ? HypothesisKind::LinearityOnly
                                                    : HypothesisKind::JointLinearityPredictability;
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '|', '/');
    return s;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned threads, const TableProvider& tables) {
    spec.validate();
    ExperimentResult result;
    result.kind = spec.kind;
    result.test = spec.test;
    result.provenance = make_provenance(spec.to_json(), spec.seed);

    const bool accuracy = spec.kind == ExperimentKind::ThresholdAccuracy;
    const std::vector<Estimator> estimators = accuracy ? std::vector<Estimator>{Estimator::OLS} : spec.estimators;
    const CovarianceSpec cov = CovarianceSpec::with_endogeneity(spec.p, 1, spec.endogeneity);
    const ThresholdDgpSpec dgp = cell_dgp(spec);
    std::map<TableKey, CriticalValueTable> table_cache;

    auto table_for = [&](const TableKey& key) -> const CriticalValueTable& {
        if (auto it = table_cache.find(key); it != table_cache.end()) return it->second;
        std::optional<CriticalValueTable> table;
        if (tables) table = tables(key);
        if (!table) {
            if (!spec.simulate_missing_tables) {
                throw Error(ErrorKind::MissingCriticalValues,
                            "no " + std::string(to_string(key.functional)) + " table for c=" + format_double(key.c) +
                                " phi=" + format_double(key.phi));
            }
            FunctionalParams fp;
            fp.p = key.p;
            fp.c = Vector::Constant(key.p, key.c);
            fp.phi = Vector::Constant(1, key.phi);
            fp.cov = CovarianceSpec::identity(key.p, 1);
            fp.pi1 = spec.pi1;
            fp.pi2 = spec.pi2;
            fp.intercept = key.intercept;
            std::vector<double> upper;
            for (double l : spec.nominal_levels) upper.push_back(1.0 - l);
            table = tabulate_critical_values(key.functional, fp, upper, spec.table_mesh, threads, 0);
        }
        return table_cache.emplace(key, std::move(*table)).first->second;
    };

    std::uint64_t cell_id = 0;
    for (Index n : spec.n_list) {
        for (double c : spec.c_list) {
            for (double phi : spec.phi_list) {
                const CellDesign cell{n, c, phi, derive_seed(spec.seed, cell_id++)};
                const PersistenceSpec pers = cell_persistence(spec, c, phi);
                const std::size_t E = estimators.size();
                std::vector<std::vector<double>> stats(E, std::vector<double>(static_cast<std::size_t>(spec.B),
                                                                             std::numeric_limits<double>::quiet_NaN()));
                std::vector<std::vector<std::string>> errors(E, std::vector<std::string>(static_cast<std::size_t>(spec.B)));

                parallel_for(spec.B, threads, [&](Index r) {
                    const auto ri = static_cast<std::size_t>(r);
                    std::optional<SimulatedSample> sim;
                    std::optional<ThresholdGrid> grid;
                    try {
                        sim = simulate_threshold_sample(dgp, pers, cov, cell.n, cell.seed, static_cast<std::uint64_t>(r));
                        grid = make_grid(sim->sample, spec.pi1, spec.pi2);
                    } catch (const Error& e) {
                        for (std::size_t k = 0; k < E; ++k) errors[k][ri] = e.what();
                        return;
                    }
                    for (std::size_t k = 0; k < E; ++k) {
                        try {
                            if (accuracy) {
                                stats[k][ri] = estimate_threshold(sim->sample, *grid).gamma_hat - spec.gamma0;
                            } else if (spec.test == TestProcedure::WaldAtEstimatedThreshold) {
                                stats[k][ri] =
                                    wald_at_estimated_threshold(sim->sample, *grid, estimators[k], spec.ivx).statistic;
                            } else {
                                stats[k][ri] = sup_wald(sim->sample, *grid, hypothesis_for(spec.test), estimators[k],
                                                        spec.ivx)
                                                   .sup_stat;
                            }
                        } catch (const Error& e) {
                            errors[k][ri] = e.what();
                        }
                    }
                });

                for (std::size_t k = 0; k < E; ++k) {
                    const auto& values = stats[k];
                    std::vector<double> ok;
                    std::string first_error;
                    for (std::size_t r = 0; r < values.size(); ++r) {
                        if (std::isnan(values[r])) {
                            if (first_error.empty()) first_error = errors[k][r];
                        } else {
                            ok.push_back(values[r]);
                        }
                    }
                    const Index failures = spec.B - static_cast<Index>(ok.size());
                    const bool aborted =
                        static_cast<double>(failures) > spec.max_failure_rate * static_cast<double>(spec.B);
                    const std::string status =
                        aborted ? sanitize("aborted: " + std::to_string(failures) + " failed replications; first: " +
                                           first_error)
                                : "ok";

                    CellRecord base;
                    base.n = n;
                    base.c = c;
                    base.phi = phi;
                    base.estimator = estimators[k];
                    base.B = spec.B;
                    base.failures = failures;
                    base.status = status;
                    base.statistics = values;

                    if (accuracy) {
                        CellRecord rec = base;
                        if (aborted || ok.empty()) {
                            rec.rmse = rec.median_abs_error = std::numeric_limits<double>::quiet_NaN();
                        } else {
                            double ss = 0.0;
                            std::vector<double> abs_err;
                            for (double e : ok) {
                                ss += e * e;
                                abs_err.push_back(std::abs(e));
                            }
                            rec.rmse = std::sqrt(ss / static_cast<double>(ok.size()));
                            std::sort(abs_err.begin(), abs_err.end());
                            rec.median_abs_error = quantile_sorted(abs_err, 0.5);
                        }
                        rec.rate = rec.mc_se = 0.0;
                        rec.critical_source = "none";
                        result.records.push_back(std::move(rec));
                        continue;
                    }

                    for (double level : spec.nominal_levels) {
                        CellRecord rec = base;
                        rec.level = level;
                        if (spec.test == TestProcedure::WaldAtEstimatedThreshold) {
                            const boost::math::chi_squared_distribution<double> chi(static_cast<double>(2 * spec.p));
                            rec.critical_value = boost::math::quantile(boost::math::complement(chi, level));
                            rec.critical_source = "chi2(" + std::to_string(2 * spec.p) + ")";
                        } else {
                            const Functional f = functional_for(spec.test, estimators[k]);
                            const bool pivotal = estimators[k] == Estimator::IVX;
                            const TableKey key{f, pivotal ? 0.0 : c, pivotal ? 0.0 : phi, spec.p,
                                               pivotal ? false : spec.intercept};
                            const CriticalValueTable& table = table_for(key);
                            rec.critical_value = table.critical_value(1.0 - level);
                            rec.critical_source = std::string(to_string(f)) + " reps=" + std::to_string(table.reps) +
                                                  " seed=" + std::to_string(table.seed);
                        }
                        if (aborted || ok.empty()) {
                            rec.rate = rec.mc_se = std::numeric_limits<double>::quiet_NaN();
                        } else {
                            Index rejections = 0;
                            for (double v : ok) rejections += v > rec.critical_value ? 1 : 0;
                            const auto m = static_cast<double>(ok.size());
                            rec.rate = static_cast<double>(rejections) / m;
                            rec.mc_se = std::sqrt(rec.rate * (1.0 - rec.rate) / m);
                        }
                        rec.rmse = rec.median_abs_error = 0.0;
                        result.records.push_back(std::move(rec));
                    }
                }
            }
        }
    }
    return result;
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "csv") return ReportFormat::Csv;
    if (text == "json") return ReportFormat::Json;
    if (text == "markdown" || text == "md") return ReportFormat::Markdown;
    throw Error(ErrorKind::ConfigInvalid, "unknown report format '" + std::string(text) + "'");
}

namespace {

const char* const kColumns[] = {"n",    "c",     "phi",  "estimator",        "level",          "B",
                                "failures", "rate", "mc_se", "rmse", "median_abs_error", "critical_value",
                                "critical_source", "status"};

std::vector<std::string> record_fields(const CellRecord& r) {
    return {std::to_string(r.n),        format_double(r.c),        format_double(r.phi),
            std::string(to_string(r.estimator)), format_double(r.level), std::to_string(r.B),
            std::to_string(r.failures), format_double(r.rate),     format_double(r.mc_se),
            format_double(r.rmse),      format_double(r.median_abs_error), format_double(r.critical_value),
            sanitize(r.critical_source), sanitize(r.status)};
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double json_number(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string fixed4(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double parse_double_field(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error(ErrorKind::ParseError, "bad number '" + std::string(s) + "' in result table");
    }
    return v;
}

Index parse_index_field(std::string_view s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error(ErrorKind::ParseError, "bad integer '" + std::string(s) + "' in result table");
    }
    return static_cast<Index>(v);
}

}  // namespace

std::string summarize(const ExperimentResult& result, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::Csv: {
            os << provenance_csv_header(result.provenance);
            os << "# kind: " << to_string(result.kind) << '\n' << "# test: " << to_string(result.test) << '\n';
            for (std::size_t i = 0; i < std::size(kColumns); ++i) os << (i ? "," : "") << kColumns[i];
            os << '\n';
            for (const auto& r : result.records) {
                const auto f = record_fields(r);
                for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
                os << '\n';
            }
            break;
        }
        case ReportFormat::Json: {
            nlohmann::json records = nlohmann::json::array();
            for (const auto& r : result.records) {
                records.push_back({{"n", r.n},
                                   {"c", r.c},
                                   {"phi", r.phi},
                                   {"estimator", std::string(to_string(r.estimator))},
                                   {"level", r.level},
                                   {"B", r.B},
                                   {"failures", r.failures},
                                   {"rate", number_or_null(r.rate)},
                                   {"mc_se", number_or_null(r.mc_se)},
                                   {"rmse", number_or_null(r.rmse)},
                                   {"median_abs_error", number_or_null(r.median_abs_error)},
                                   {"critical_value", number_or_null(r.critical_value)},
                                   {"critical_source", sanitize(r.critical_source)},
                                   {"status", sanitize(r.status)}});
            }
            const nlohmann::json doc = {{"provenance", result.provenance.to_json()},
                                        {"kind", std::string(to_string(result.kind))},
                                        {"test", std::string(to_string(result.test))},
                                        {"records", records}};
            os << doc.dump(2) << '\n';
            break;
        }
        case ReportFormat::Markdown: {
            os << "<!-- tool_version=" << result.provenance.tool_version
               << " config_hash=" << result.provenance.config_hash << " seed=" << result.provenance.seed
               << " timestamp=" << result.provenance.timestamp << " -->\n";
            os << "Experiment: " << to_string(result.kind) << ", test: " << to_string(result.test) << "\n\n";
            os << "|";
            for (const char* col : kColumns) os << ' ' << col << " |";
            os << "\n|";
            for (std::size_t i = 0; i < std::size(kColumns); ++i) os << "---|";
            os << '\n';
            for (const auto& r : result.records) {
                os << "| " << r.n << " | " << fixed4(r.c) << " | " << fixed4(r.phi) << " | " << to_string(r.estimator)
                   << " | " << fixed4(r.level) << " | " << r.B << " | " << r.failures << " | " << fixed4(r.rate)
                   << " | " << fixed4(r.mc_se) << " | " << fixed4(r.rmse) << " | " << fixed4(r.median_abs_error)
                   << " | " << fixed4(r.critical_value) << " | " << sanitize(r.critical_source) << " | "
                   << sanitize(r.status) << " |\n";
            }
            break;
        }
    }
    return os.str();
}

ExperimentResult result_from_csv(std::string_view text) {
    ExperimentResult result;
    bool header_seen = false;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() : nl + 1;
        if (line.empty()) continue;
        if (line.front() == '#') {
            const std::size_t colon = line.find(": ");
            if (colon == std::string_view::npos) continue;
            const std::string key(line.substr(2, colon - 2));
            const std::string value(line.substr(colon + 2));
            if (key == "tool_version") result.provenance.tool_version = value;
            else if (key == "config_hash") result.provenance.config_hash = value;
            else if (key == "seed") result.provenance.seed = static_cast<std::uint64_t>(std::stoull(value));
            else if (key == "timestamp") result.provenance.timestamp = value;
            else if (key == "config") result.provenance.config = nlohmann::json::parse(value);
            else if (key == "kind") result.kind = parse_experiment_kind(value);
            else if (key == "test") result.test = parse_test_procedure(value);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> f;
        std::size_t s = 0;
        while (true) {
            const std::size_t comma = line.find(',', s);
            f.push_back(line.substr(s, comma == std::string_view::npos ? std::string_view::npos : comma - s));
            if (comma == std::string_view::npos) break;
            s = comma + 1;
        }
        if (f.size() != std::size(kColumns)) throw Error(ErrorKind::ParseError, "result row has wrong field count");
        CellRecord r;
        r.n = parse_index_field(f[0]);
        r.c = parse_double_field(f[1]);
        r.phi = parse_double_field(f[2]);
        r.estimator = parse_estimator(f[3]);
        r.level = parse_double_field(f[4]);
        r.B = parse_index_field(f[5]);
        r.failures = parse_index_field(f[6]);
        r.rate = parse_double_field(f[7]);
        r.mc_se = parse_double_field(f[8]);
        r.rmse = parse_double_field(f[9]);
        r.median_abs_error = parse_double_field(f[10]);
        r.critical_value = parse_double_field(f[11]);
        r.critical_source = std::string(f[12]);
        r.status = std::string(f[13]);
        result.records.push_back(std::move(r));
    }
    return result;
}

ExperimentResult result_from_json(std::string_view text) {
    const auto doc = nlohmann::json::parse(text);
    ExperimentResult result;
    result.provenance = Provenance::from_json(doc.at("provenance"));
    result.kind = parse_experiment_kind(doc.at("kind").get<std::string>());
    result.test = parse_test_procedure(doc.at("test").get<std::string>());
    for (const auto& j : doc.at("records")) {
        CellRecord r;
        r.n = j.at("n").get<Index>();
        r.c = j.at("c").get<double>();
        r.phi = j.at("phi").get<double>();
        r.estimator = parse_estimator(j.at("estimator").get<std::string>());
        r.level = j.at("level").get<double>();
        r.B = j.at("B").get<Index>();
        r.failures = j.at("failures").get<Index>();
        r.rate = json_number(j.at("rate"));
        r.mc_se = json_number(j.at("mc_se"));
        r.rmse = json_number(j.at("rmse"));
        r.median_abs_error = json_number(j.at("median_abs_error"));
        r.critical_value = json_number(j.at("critical_value"));
        r.critical_source = j.at("critical_source").get<std::string>();
        r.status = j.at("status").get<std::string>();
        result.records.push_back(std::move(r));
    }
    return result;
}

}  // namespace tpr
