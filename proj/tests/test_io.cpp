#include "tpr/io.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <string>

using namespace tpr;

namespace {

/// Header plus `rows` data rows of t,y,x1,q; `bad_row` (1-based) gets
/// `bad_value` in the x1 column.
std::string synthetic_csv(int rows, int bad_row = 0, const std::string& bad_value = "") {
    std::ostringstream os;
    os << "date,y,x1,q\n";
    for (int r = 1; r <= rows; ++r) {
        os << "2000-01-" << r << ',' << 0.01 * r << ',';
        if (r == bad_row) {
            os << bad_value;
        } else {
            os << std::sin(0.3 * r);
        }
        os << ',' << std::cos(0.7 * r) << '\n';
    }
    return os.str();
}

ColumnMapping date_mapping() {
    ColumnMapping m;
    m.date = "date";
    return m;
}

}  // namespace

TEST_CASE("short files are rejected") {
    try {
        parse_dataset_text(synthetic_csv(3), date_mapping());
        FAIL("expected TooFewRows");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooFewRows);
    }
    CHECK_THROWS_AS(parse_dataset_text("", date_mapping()), Error);
    // 31 rows give exactly 30 aligned observations.
    CHECK(parse_dataset_text(synthetic_csv(31), date_mapping()).sample.n() == 30);
    CHECK_THROWS_AS(parse_dataset_text(synthetic_csv(30), date_mapping()), Error);
}

TEST_CASE("non-finite values report row and column") {
    for (const std::string bad : {"NaN", "inf", "", "1.5x"}) {
        try {
            parse_dataset_text(synthetic_csv(40, 17, bad), date_mapping());
            FAIL("expected ParseFailure");
        } catch (const ParseFailure& e) {
            CHECK(e.kind() == ErrorKind::ParseError);
            CHECK(e.row() == 17);
            CHECK(e.column() == "x1");
        }
    }
}

TEST_CASE("missing columns") {
    ColumnMapping m = date_mapping();
    m.q = "epu";
    try {
        parse_dataset_text(synthetic_csv(40), m);
        FAIL("expected MissingColumn");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingColumn);
    }
    m = date_mapping();
    m.x.clear();
    CHECK_THROWS_AS(parse_dataset_text(synthetic_csv(40), m), Error);
}

TEST_CASE("lag alignment") {
    const auto ds = parse_dataset_text(synthetic_csv(40), date_mapping());
    REQUIRE(ds.sample.n() == 39);
    CHECK(ds.raw_rows == 40);
    CHECK(ds.dates.front() == "2000-01-2");
    CHECK(ds.dates.size() == 39);
    for (Index t = 0; t < 39; ++t) {
        const double r = static_cast<double>(t + 1);
        CHECK(ds.sample.y(t) == doctest::Approx(0.01 * (r + 1)));
        CHECK(ds.sample.x_lag(t, 0) == doctest::Approx(std::sin(0.3 * r)));
        CHECK(ds.sample.q_lag(t) == doctest::Approx(std::cos(0.7 * r)));
    }
    CHECK(ds.x_path.rows() == 40);
}

TEST_CASE("byte order mark, quotes, comments and CRLF") {
    std::string text = "\xEF\xBB\xBF# exported\r\n" + synthetic_csv(35);
    std::string quoted;
    for (char ch : text) {
        if (ch == '\n') quoted += "\r\n";
        else quoted += ch;
    }
    const auto pos = quoted.find("date,y,x1,q");
    REQUIRE(pos != std::string::npos);
    quoted.replace(pos, 11, "\"date\",\"y\",\"x1\",\"q\"");
    const auto plain = parse_dataset_text(synthetic_csv(35), date_mapping());
    const auto ds = parse_dataset_text(quoted, date_mapping());
    CHECK(ds.sample.y == plain.sample.y);
    CHECK(ds.sample.x_lag == plain.sample.x_lag);
}

TEST_CASE("simulated files round trip") {
    const Index p = 2;
    ThresholdDgpSpec dgp = ThresholdDgpSpec::standard_design(p);
    const auto sim = simulate_threshold_sample(dgp, testing::persistence(p, 5.0, 0.25),
                                               CovarianceSpec::with_endogeneity(p, 1, 0.4), 120, 3);
    std::ostringstream os;
    const auto prov = make_provenance({{"n", 120}}, 3);
    write_simulated_csv(os, sim, prov);
    const auto ds = parse_dataset_text(os.str(), simulated_mapping(p, 1));
    CHECK(ds.sample.y == sim.sample.y);
    CHECK(ds.sample.x_lag == sim.sample.x_lag);
    CHECK(ds.sample.q_lag == sim.sample.q_lag);
    CHECK(ds.sample.has_intercept == sim.sample.has_intercept);
    CHECK(ds.x_path == sim.path.x);
    CHECK(ds.u_phi == sim.path.u_phi());

    const auto path = dataset_path(ds, testing::persistence(p, 5.0, 0.25));
    CHECK(path.x == sim.path.x);
    CHECK(path.u_phi() == sim.path.u_phi());
    CHECK_THROWS_AS(dataset_path(ds, testing::persistence(1, 5.0, 0.25)), Error);
    const auto no_phi = parse_dataset_text(os.str(), simulated_mapping(p, 0));
    try {
        dataset_path(no_phi, testing::persistence(p, 5.0, 0.25));
        FAIL("expected MissingExogenousDraws");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingExogenousDraws);
    }
}

TEST_CASE("provenance") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    setenv("SOURCE_DATE_EPOCH", "0", 1);
    CHECK(timestamp_utc() == "1970-01-01T00:00:00Z");
    setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    const auto prov = make_provenance({{"seed", 4}}, 4);
    unsetenv("SOURCE_DATE_EPOCH");
    CHECK(prov.timestamp == "2023-11-14T22:13:20Z");
    CHECK(prov.config_hash == fnv1a_hex(R"({"seed":4})"));
    CHECK(!prov.tool_version.empty());
    const auto header = provenance_csv_header(prov);
    CHECK(header.find("# tool_version: ") == 0);
    CHECK(header.find("# config_hash: " + prov.config_hash) != std::string::npos);
    const auto back = Provenance::from_json(prov.to_json());
    CHECK(back.config == prov.config);
    CHECK(back.timestamp == prov.timestamp);
}

TEST_CASE("shortest round-trip formatting") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, std::numeric_limits<double>::denorm_min()}) {
        const auto s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("file helpers") {
    CHECK_THROWS_AS(read_file("/nonexistent/dir/file.csv"), Error);
    const std::string path = "io_helper_test.tmp";
    write_file(path, "abc\n");
    CHECK(read_file(path) == "abc\n");
    std::remove(path.c_str());
}
