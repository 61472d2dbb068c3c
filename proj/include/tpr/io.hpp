#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tpr {

/// Attached to every output file.
struct Provenance {
    std::string tool_version;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    nlohmann::json config;

    nlohmann::json to_json() const;
    static Provenance from_json(const nlohmann::json& j);
};

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

/// UTC ISO-8601 time; SOURCE_DATE_EPOCH overrides the clock when set.
std::string timestamp_utc();

/// Hash is taken over the compact dump of `config`.
Provenance make_provenance(const nlohmann::json& config, std::uint64_t seed);

/// Lines "# key: value" placed before CSV headers.
std::string provenance_csv_header(const Provenance& prov);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Which CSV columns feed the model. An empty date name means no date column.
struct ColumnMapping {
    std::string date;
    std::string y = "y";
    std::vector<std::string> x = {"x1"};
    std::string q = "q";
    std::vector<std::string> u_phi;  ///< optional perturbation-shock columns
    bool intercept = true;
};

/// Parsed and lag-aligned data: sample row t-1 holds (y_t, x_{t-1}, q_{t-1}).
struct EmpiricalDataset {
    std::vector<std::string> dates;  ///< dates of y_t, empty without a date column
    Sample sample;
    Matrix x_path;  ///< every raw row of the regressors, x_0..x_n
    Matrix u_phi;   ///< rows 1..n of the u_phi columns (empty when not mapped)
    ColumnMapping mapping;
    Index raw_rows = 0;
};

/// ParseError with the offending data row (1-based, header and '#' lines
/// not counted) and column name.
class ParseFailure : public Error {
public:
    ParseFailure(Index row, std::string column, const std::string& what)
        : Error(ErrorKind::ParseError, "row " + std::to_string(row) + ", column '" + column + "': " + what),
          row_(row),
          column_(std::move(column)) {}
    Index row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    Index row_;
    std::string column_;
};

/// Comma-separated text with one header row; lines starting with '#' are
/// skipped. Throws MissingColumn, ParseFailure or TooFewRows (fewer than 30
/// aligned rows).
EmpiricalDataset parse_dataset_text(std::string_view text, const ColumnMapping& mapping);
EmpiricalDataset parse_dataset(const std::string& path, const ColumnMapping& mapping);

/// Writes t, y, x1..xp, q, uphi1..uphid for t = 0..n (y_0 and u_phi_0
/// written as 0) so that parse_dataset with simulated_mapping rebuilds
/// `sim.sample` and the stored perturbation shocks.
void write_simulated_csv(std::ostream& out, const SimulatedSample& sim, const Provenance& prov);

/// Column mapping matching write_simulated_csv for p regressors and d
/// perturbation shocks.
ColumnMapping simulated_mapping(Index p, Index d = 0, bool intercept = true);

/// Regressor path over the dataset rows carrying the mapped u_phi columns,
/// for the corrected instrument and persistence fits. Realized
/// coefficients are unknown and left at zero. Throws MissingExogenousDraws
/// when no u_phi columns were mapped.
RegressorPath dataset_path(const EmpiricalDataset& ds, const PersistenceSpec& spec);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace tpr
