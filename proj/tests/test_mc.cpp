#include "tpr/mc.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

using namespace tpr;

namespace {

ExperimentSpec mini_spec() {
    ExperimentSpec s;
    s.kind = ExperimentKind::Size;
    s.test = TestProcedure::WaldAtEstimatedThreshold;
    s.n_list = {60};
    s.c_list = {1, 5};
    s.phi_list = {0, 0.25};
    s.B = 40;
    s.p = 1;
    s.nominal_levels = {0.05, 0.10};
    s.seed = 7;
    return s;
}

class FixedEpoch {
public:
    FixedEpoch() { setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }
    ~FixedEpoch() { unsetenv("SOURCE_DATE_EPOCH"); }
};

const std::string kGolden = std::string(TPR_TEST_DATA) + "/mc_golden.md";

}  // namespace

TEST_CASE("experiment spec validation") {
    auto expect_invalid = [](const ExperimentSpec& s) {
        try {
            s.validate();
            FAIL("expected ConfigInvalid");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ConfigInvalid);
        }
    };
    ExperimentSpec s = mini_spec();
    CHECK_NOTHROW(s.validate());
    s.B = 0;
    expect_invalid(s);
    s = mini_spec();
    s.n_list = {10};
    expect_invalid(s);
    s = mini_spec();
    s.nominal_levels = {1.5};
    expect_invalid(s);
    s = mini_spec();
    s.c_list.clear();
    expect_invalid(s);
    s = mini_spec();
    s.endogeneity = 1.0;
    expect_invalid(s);
    s = mini_spec();
    s.tau = 0.5;
    expect_invalid(s);
    s = mini_spec();
    s.pi1 = 0.9;
    expect_invalid(s);
}

TEST_CASE("standard design presets") {
    const auto acc = ExperimentSpec::standard_design(ExperimentKind::ThresholdAccuracy);
    CHECK(acc.B == 5000);
    CHECK(acc.tau == 0.0);
    const auto size = ExperimentSpec::standard_design(ExperimentKind::Size);
    CHECK(size.B == 1000);
    CHECK(size.c_list == std::vector<double>{1, 2, 5, 10});
    CHECK(size.phi_list == std::vector<double>{0, 0.05, 0.25, 0.50});
    CHECK(size.n_list == std::vector<Index>{250, 500});
}

TEST_CASE("single replication gives zero standard error") {
    ExperimentSpec s = mini_spec();
    s.B = 1;
    s.c_list = {1};
    s.phi_list = {0};
    s.nominal_levels = {0.05};
    s.estimators = {Estimator::IVX};
    const auto r = run_experiment(s, 1);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].mc_se == 0.0);
    CHECK((r.records[0].rate == 0.0 || r.records[0].rate == 1.0));
    CHECK(r.records[0].status == "ok");
}

TEST_CASE("records respect the rate invariants") {
    const auto r = run_experiment(mini_spec(), 1);
    CHECK(r.records.size() == 2 * 2 * 2 * 2);
    for (const auto& rec : r.records) {
        CHECK(rec.rate >= 0.0);
        CHECK(rec.rate <= 1.0);
        CHECK(rec.mc_se == doctest::Approx(std::sqrt(rec.rate * (1 - rec.rate) / rec.B)).epsilon(1e-12));
        CHECK(rec.critical_source == "chi2(2)");
    }
}

TEST_CASE("results do not depend on the thread count") {
    FixedEpoch epoch;
    const auto one = summarize(run_experiment(mini_spec(), 1), ReportFormat::Csv);
    const auto three = summarize(run_experiment(mini_spec(), 3), ReportFormat::Csv);
    CHECK(one == three);
}

TEST_CASE("accuracy cells report error summaries") {
    ExperimentSpec s = mini_spec();
    s.kind = ExperimentKind::ThresholdAccuracy;
    s.tau = 0.0;
    s.B = 30;
    s.n_list = {100};
    const auto r = run_experiment(s, 1);
    REQUIRE(r.records.size() == 4);
    for (const auto& rec : r.records) {
        CHECK(rec.estimator == Estimator::OLS);
        CHECK(rec.rmse > 0.0);
        CHECK(rec.median_abs_error <= rec.rmse * 3);
        CHECK(rec.statistics.size() == 30);
    }
}

TEST_CASE("failures beyond the allowance abort the cell") {
    ExperimentSpec s = mini_spec();
    s.c_list = {1e5};
    s.phi_list = {0};
    s.n_list = {30};
    s.B = 5;
    const auto r = run_experiment(s, 1);
    REQUIRE(!r.records.empty());
    for (const auto& rec : r.records) {
        CHECK(rec.failures == 5);
        CHECK(rec.status.rfind("aborted", 0) == 0);
        CHECK(rec.status.find("floating-point range") != std::string::npos);
        CHECK(std::isnan(rec.rate));
    }
}

TEST_CASE("missing tables") {
    ExperimentSpec s = mini_spec();
    s.test = TestProcedure::SupWaldLinearity;
    s.simulate_missing_tables = false;
    s.B = 2;
    try {
        run_experiment(s, 1);
        FAIL("expected MissingCriticalValues");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingCriticalValues);
    }

    std::vector<TableKey> requested;
    TableProvider provider = [&](const TableKey& key) -> std::optional<CriticalValueTable> {
        requested.push_back(key);
        CriticalValueTable t;
        t.functional = key.functional;
        t.levels = {0.9, 0.95};
        t.quantiles = {7.0, 9.0};
        t.reps = 123;
        return t;
    };
    const auto r = run_experiment(s, 1, provider);
    // One table per (c, phi) for OLS and a single pivotal table for IVX.
    CHECK(requested.size() == 4 + 1);
    for (const auto& rec : r.records) {
        CHECK(rec.critical_source.find("reps=123") != std::string::npos);
        CHECK(rec.critical_value == (rec.level == 0.05 ? 9.0 : 7.0));
    }
}

TEST_CASE("empty result gives a header-only table") {
    ExperimentResult empty;
    const auto csv = summarize(empty, ReportFormat::Csv);
    CHECK(csv.find("n,c,phi,estimator,level,B,failures,rate,mc_se,rmse,median_abs_error,critical_value,"
                   "critical_source,status\n") != std::string::npos);
    CHECK(result_from_csv(csv).records.empty());
    const auto md = summarize(empty, ReportFormat::Markdown);
    CHECK(md.find("| n | c |") != std::string::npos);
    CHECK(md.substr(md.size() - 5) == "---|\n");
    CHECK(result_from_json(summarize(empty, ReportFormat::Json)).records.empty());
}

TEST_CASE("csv to json to csv round trip is lossless") {
    ExperimentSpec s = mini_spec();
    s.c_list = {1, 1e5};
    s.phi_list = {0.05};
    s.n_list = {30};
    s.B = 10;
    const auto result = run_experiment(s, 1);
    const auto csv = summarize(result, ReportFormat::Csv);
    const auto via_csv = result_from_csv(csv);
    const auto json = summarize(via_csv, ReportFormat::Json);
    const auto back = summarize(result_from_json(json), ReportFormat::Csv);
    CHECK(back == csv);
    CHECK(summarize(result_from_json(json), ReportFormat::Json) == json);
    CHECK(via_csv.kind == result.kind);
    CHECK(via_csv.provenance.config == result.provenance.config);
}

TEST_CASE("markdown summary matches the golden file") {
    FixedEpoch epoch;
    ExperimentSpec s = mini_spec();
    s.n_list = {50};
    s.c_list = {2};
    s.phi_list = {0, 0.5};
    s.B = 25;
    s.seed = 99;
    const auto md = summarize(run_experiment(s, 2), ReportFormat::Markdown);
    if (const char* regen = std::getenv("TPR_REGENERATE_GOLDEN"); regen != nullptr && *regen == '1') {
        write_file(kGolden, md);
    }
    CHECK(md == read_file(kGolden));
}

TEST_CASE("report format names") {
    CHECK(parse_report_format("csv") == ReportFormat::Csv);
    CHECK(parse_report_format("md") == ReportFormat::Markdown);
    CHECK_THROWS_AS(parse_report_format("xlsx"), Error);
    CHECK(parse_test_procedure(to_string(TestProcedure::SupWaldJoint)) == TestProcedure::SupWaldJoint);
    CHECK(parse_experiment_kind(to_string(ExperimentKind::Power)) == ExperimentKind::Power);
}

TEST_CASE("IVX Wald at the estimated threshold holds its size" * doctest::timeout(600)) {
    ExperimentSpec s;
    s.kind = ExperimentKind::Size;
    s.test = TestProcedure::WaldAtEstimatedThreshold;
    s.n_list = {250};
    s.c_list = {1};
    s.phi_list = {0};
    s.B = 1000;
    s.p = 1;
    s.estimators = {Estimator::IVX};
    const auto r = run_experiment(s, 0);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].rate >= 0.03);
    CHECK(r.records[0].rate <= 0.08);
}
