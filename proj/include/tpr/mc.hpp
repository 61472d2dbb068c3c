#pragma once

#include "tpr/core.hpp"
#include "tpr/dgp.hpp"
#include "tpr/io.hpp"
#include "tpr/ivx.hpp"
#include "tpr/limitsim.hpp"
#include "tpr/wald.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tpr {

enum class ExperimentKind { ThresholdAccuracy, Size, Power };

/// Which statistic a Size or Power cell evaluates.
enum class TestProcedure {
    WaldAtEstimatedThreshold,  ///< slopes-zero Wald at the null-restricted gamma_hat, chi2(2p) reference
    SupWaldLinearity,          ///< sup-Wald for no threshold effect
    SupWaldJoint               ///< sup-Wald for no threshold effect and no predictability
};

std::string_view to_string(ExperimentKind k) noexcept;
std::string_view to_string(TestProcedure t) noexcept;
ExperimentKind parse_experiment_kind(std::string_view text);
TestProcedure parse_test_procedure(std::string_view text);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Size;
    TestProcedure test = TestProcedure::WaldAtEstimatedThreshold;
    std::vector<Index> n_list = {250, 500};
    std::vector<double> c_list = {1, 2, 5, 10};
    std::vector<double> phi_list = {0, 0.05, 0.25, 0.50};
    Index B = 1000;
    std::vector<double> nominal_levels = {0.05};
    std::vector<Estimator> estimators = {Estimator::OLS, Estimator::IVX};
    Index p = 2;
    bool intercept = true;
    double endogeneity = 0.0;  ///< correlation between u_y and every u_x
    double delta0 = 2.0;       ///< regime-1 slope scale under the alternative
    double tau = 0.25;         ///< regime-1 slope is delta0 * n^{-tau}
    double gamma0 = 0.25;
    CoefficientForm form = CoefficientForm::ExactExponential;
    IvxConfig ivx;
    double pi1 = kDefaultTrimLower;
    double pi2 = kDefaultTrimUpper;
    std::uint64_t seed = 20240101;
    double max_failure_rate = 0.01;
    MeshSpec table_mesh{2000, 10000, 1};  ///< for sup-Wald critical values
    bool simulate_missing_tables = true;
    std::string preset = "custom";

    /// Throws ConfigInvalid.
    void validate() const;
    /// Everything that determines the results (thread count excluded).
    nlohmann::json to_json() const;

    /// c in {1,2,5,10}, phi in {0,0.05,0.25,0.5}, n in {250,500}, two
    /// regressors sharing one perturbation shock; B = 5000 for accuracy and
    /// 1000 for tests. Accuracy cells use a fixed (tau = 0) threshold effect.
    static ExperimentSpec standard_design(ExperimentKind kind);
};

/// Key of a sup-Wald critical-value table.
struct TableKey {
    Functional functional;
    double c;
    double phi;
    Index p;
    bool intercept;
    auto operator<=>(const TableKey&) const = default;
};

/// Supplies critical-value tables; returning nullopt means "not available".
using TableProvider = std::function<std::optional<CriticalValueTable>(const TableKey&)>;

struct CellRecord {
    Index n = 0;
    double c = 0.0;
    double phi = 0.0;
    Estimator estimator = Estimator::OLS;
    double level = 0.0;  ///< nominal level; 0 for accuracy cells
    Index B = 0;
    Index failures = 0;
    double rate = 0.0;   ///< rejection frequency among successful replications
    double mc_se = 0.0;  ///< sqrt(rate (1 - rate) / B)
    double rmse = 0.0;   ///< accuracy cells: RMSE of gamma_hat - gamma0
    double median_abs_error = 0.0;
    double critical_value = 0.0;
    std::string critical_source;
    std::string status = "ok";  ///< "ok" or "aborted: ..."
    std::vector<double> statistics;  ///< per replication; NaN where it failed (not serialized)
};

struct ExperimentResult {
    ExperimentKind kind = ExperimentKind::Size;
    TestProcedure test = TestProcedure::WaldAtEstimatedThreshold;
    std::vector<CellRecord> records;
    Provenance provenance;
};

/// Runs every (n, c, phi) cell. Replication r of cell k draws from seed
/// derive_seed(spec.seed, k) with replication index r, and the OLS and IVX
/// statistics of a cell share those samples. Results do not depend on
/// `threads`. Throws MissingCriticalValues or ConfigInvalid.
ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned threads = 0,
                                const TableProvider& tables = nullptr);

enum class ReportFormat { Csv, Json, Markdown };
ReportFormat parse_report_format(std::string_view text);

std::string summarize(const ExperimentResult& result, ReportFormat format);

/// Inverses of the csv and json summaries (per-replication statistics are not stored).
ExperimentResult result_from_csv(std::string_view text);
ExperimentResult result_from_json(std::string_view text);

}  // namespace tpr
