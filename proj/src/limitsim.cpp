#include "tpr/limitsim.hpp"

#include "tpr/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#ifndef TPR_VERSION
#define TPR_VERSION "0.0.0"
#endif

namespace tpr {

void MeshSpec::validate() const {
    if (steps < 100) throw Error(ErrorKind::InvalidConfig, "mesh needs at least 100 steps");
    if (reps < 100) throw Error(ErrorKind::InvalidConfig, "limit simulation needs at least 100 draws");
}

Matrix GPath::gram() const {
    const Index p = g.cols();
    Matrix m = Matrix::Zero(p, p);
    for (Index k = 0; k < steps(); ++k) m.selfadjointView<Eigen::Lower>().rankUpdate(g.row(k).transpose(), dt);
    return m.selfadjointView<Eigen::Lower>();
}

GPath g_path_from_increments(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Vector>& phi,
                             const Eigen::Ref<const Matrix>& dbx, const Eigen::Ref<const Matrix>& dbphi) {
    const Index steps = dbx.rows();
    const Index p = dbx.cols();
    if (c.size() != p || phi.size() != dbphi.cols() || dbphi.rows() != steps) {
        throw Error(ErrorKind::DimensionMismatch, "c, phi and Brownian increments disagree");
    }
    GPath out;
    out.dt = 1.0 / static_cast<double>(steps);
    out.bx = Matrix::Zero(steps + 1, p);
    out.bphi = Matrix::Zero(steps + 1, phi.size());
    out.g = Matrix::Zero(steps + 1, p);
    for (Index k = 0; k < steps; ++k) {
        out.bx.row(k + 1) = out.bx.row(k) + dbx.row(k);
        out.bphi.row(k + 1) = out.bphi.row(k) + dbphi.row(k);
    }
    Vector integral = Vector::Zero(p);
    for (Index k = 0; k < steps; ++k) {
        const double s0 = static_cast<double>(k) * out.dt;
        const double s1 = static_cast<double>(k + 1) * out.dt;
        const double env0 = out.bphi.row(k).dot(phi);
        const double env1 = out.bphi.row(k + 1).dot(phi);
        for (Index i = 0; i < p; ++i) {
            integral(i) += std::exp(-s0 * c(i) - env0) * dbx(k, i);
            out.g(k + 1, i) = std::exp(s1 * c(i) + env1) * integral(i);
        }
    }
    return out;
}

std::pair<Matrix, Matrix> brownian_increments(const CovarianceSpec& cov, Index steps, std::uint64_t seed,
                                              std::uint64_t replication) {
    const Index p = cov.p();
    const Index d = cov.d();
    if (cov.cross_xphi.rows() != p || cov.cross_xphi.cols() != d) {
        throw Error(ErrorKind::DimensionMismatch, "cross_xphi block has wrong shape");
    }
    Matrix block(p + d, p + d);
    block << cov.sigma_xx, cov.cross_xphi, cov.cross_xphi.transpose(), cov.sigma_phiphi;
    const Eigen::LLT<Matrix> llt(block);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "regressor/perturbation covariance");
    const Matrix L = llt.matrixL();

    const NormalStream rng(seed, streams::brownian_x, replication);
    const double root_dt = std::sqrt(1.0 / static_cast<double>(steps));
    Matrix z(steps, p + d);
    for (Index k = 0; k < steps; ++k) {
        for (Index j = 0; j < p + d; ++j) z(k, j) = rng.normal(static_cast<std::uint64_t>(k * (p + d) + j));
    }
    const Matrix inc = root_dt * z * L.transpose();
    return {inc.leftCols(p), inc.rightCols(d)};
}

GPath simulate_g_path(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Vector>& phi,
                      const CovarianceSpec& cov, const MeshSpec& mesh, std::uint64_t seed,
                      std::uint64_t replication) {
    if (mesh.steps < 100) throw Error(ErrorKind::InvalidConfig, "mesh needs at least 100 steps");
    if (c.size() != cov.p() || phi.size() != cov.d()) {
        throw Error(ErrorKind::DimensionMismatch, "c/phi dimensions do not match the covariance");
    }
    const auto [dbx, dbphi] = brownian_increments(cov, mesh.steps, seed, replication);
    return g_path_from_increments(c, phi, dbx, dbphi);
}

Vector lambda_grid(double pi1, double pi2, Index points) {
    if (!(pi1 > 0.0 && pi2 < 1.0 && pi1 <= pi2)) throw Error(ErrorKind::InvalidGrid, "need 0 < pi1 <= pi2 < 1");
    if (pi1 == pi2 || points == 1) return Vector::Constant(1, 0.5 * (pi1 + pi2));
    if (points < 2) throw Error(ErrorKind::InvalidGrid, "lambda grid needs a positive number of points");
    return Vector::LinSpaced(points, pi1, pi2);
}

namespace {

void check_lambdas(const Eigen::Ref<const Vector>& lambdas) {
    if (lambdas.size() < 1) throw Error(ErrorKind::InvalidGrid, "empty lambda grid");
    for (Index j = 0; j < lambdas.size(); ++j) {
        if (!(lambdas(j) > 0.0 && lambdas(j) < 1.0) || (j > 0 && !(lambdas(j) > lambdas(j - 1)))) {
            throw Error(ErrorKind::InvalidGrid, "lambda grid must be strictly increasing inside (0,1)");
        }
    }
}

/// Widths of the cells [0,l_1], (l_1,l_2], ..., (l_L,1].
Vector cell_widths(const Eigen::Ref<const Vector>& lambdas) {
    const Index L = lambdas.size();
    Vector w(L + 1);
    double prev = 0.0;
    for (Index j = 0; j < L; ++j) {
        w(j) = lambdas(j) - prev;
        prev = lambdas(j);
    }
    w(L) = 1.0 - prev;
    return w;
}

/// G path with a leading column of ones when the model has an intercept.
Matrix augmented(const GPath& path, bool intercept) {
    if (!intercept) return path.g;
    Matrix out(path.g.rows(), path.g.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(path.g.cols()) = path.g;
    return out;
}

Matrix left_gram(const Matrix& gt, double dt) {
    const Index k = gt.cols();
    Matrix m = Matrix::Zero(k, k);
    for (Index s = 0; s + 1 < gt.rows(); ++s) m.selfadjointView<Eigen::Lower>().rankUpdate(gt.row(s).transpose(), dt);
    return m.selfadjointView<Eigen::Lower>();
}

bool well_conditioned(const Matrix& m) {
    const Vector diag = m.diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite()) return false;
    const Vector scale = diag.cwiseSqrt().cwiseInverse();
    const Eigen::LLT<Matrix> llt(scale.asDiagonal() * m * scale.asDiagonal());
    return llt.info() == Eigen::Success && llt.rcond() >= 1e-12;
}

/// Quadratic forms from the per-cell integrals A_c = int G~ dW(., cell c).
SheetDraw sheet_functional(const Matrix& cells, const Matrix& gram, const Eigen::Ref<const Vector>& lambdas,
                           bool intercept) {
    const Index L = lambdas.size();
    const Eigen::LLT<Matrix> llt(gram);
    const Vector total = cells.rowwise().sum();
    SheetDraw out;
    out.pointwise.resize(L);
    Vector partial = Vector::Zero(gram.rows());
    for (Index j = 0; j < L; ++j) {
        partial += cells.col(j);
        const double lam = lambdas(j);
        const Vector v = partial - lam * total;
        out.pointwise(j) = v.dot(llt.solve(v)) / (lam * (1.0 - lam));
    }
    out.sup_linearity = out.pointwise.maxCoeff();
    out.slope_form = total.dot(llt.solve(total));
    if (intercept) out.slope_form -= total(0) * total(0) / gram(0, 0);
    return out;
}

GPath well_conditioned_path(const SheetLimitParams& params, const MeshSpec& mesh, std::uint64_t replication,
                            Matrix& gt, Matrix& gram) {
    // One resample on a fresh stream before giving up.
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::uint64_t rep = attempt == 0 ? replication : (replication | (std::uint64_t{1} << 63));
        GPath path = simulate_g_path(params.c, params.phi, params.cov, mesh, mesh.seed, rep);
        gt = augmented(path, params.intercept);
        gram = left_gram(gt, path.dt);
        if (well_conditioned(gram)) return path;
    }
    throw Error(ErrorKind::SingularLimitGram, "simulated int G G' is numerically singular");
}

}  // namespace

SheetDraw draw_sheet_limit(const SheetLimitParams& params, const MeshSpec& mesh, std::uint64_t replication) {
    check_lambdas(params.lambdas);
    Matrix gt, gram;
    well_conditioned_path(params, mesh, replication, gt, gram);
    const Index k = gram.rows();
    const Vector widths = cell_widths(params.lambdas);
    const Matrix L = Eigen::LLT<Matrix>(gram).matrixL();
    const NormalStream rng(mesh.seed, streams::brownian_sheet, replication);
    Matrix cells(k, widths.size());
    Vector z(k);
    for (Index c = 0; c < widths.size(); ++c) {
        rng.fill_normal(z, static_cast<std::uint64_t>(c * k));
        cells.col(c) = std::sqrt(widths(c)) * (L * z);
    }
    return sheet_functional(cells, gram, params.lambdas, params.intercept);
}

Matrix brownian_sheet_increments(Index steps, const Eigen::Ref<const Vector>& lambdas, std::uint64_t seed,
                                 std::uint64_t replication) {
    check_lambdas(lambdas);
    const Vector widths = cell_widths(lambdas);
    const Index cells = widths.size();
    const double dt = 1.0 / static_cast<double>(steps);
    const NormalStream rng(seed, streams::brownian_sheet, replication);
    Matrix out(steps, cells);
    for (Index k = 0; k < steps; ++k) {
        for (Index c = 0; c < cells; ++c) {
            out(k, c) = std::sqrt(dt * widths(c)) * rng.normal(static_cast<std::uint64_t>(k * cells + c));
        }
    }
    return out;
}

SheetDraw draw_sheet_limit_lattice(const SheetLimitParams& params, const MeshSpec& mesh, std::uint64_t replication) {
    check_lambdas(params.lambdas);
    Matrix gt, gram;
    well_conditioned_path(params, mesh, replication, gt, gram);
    const Matrix sheet = brownian_sheet_increments(mesh.steps, params.lambdas, mesh.seed ^ 0x5eedULL, replication);
    // Left-point integrand: G~ at s_k multiplies the increment over (s_k, s_{k+1}].
    const Matrix cells = gt.topRows(mesh.steps).transpose() * sheet;
    return sheet_functional(cells, gram, params.lambdas, params.intercept);
}

BridgeDraw draw_bridge_limit(const Eigen::Ref<const Vector>& lambdas, Index p, std::uint64_t seed,
                                   std::uint64_t replication) {
    check_lambdas(lambdas);
    if (p < 1) throw Error(ErrorKind::InvalidConfig, "p must be positive");
    const Vector widths = cell_widths(lambdas);
    const NormalStream rng(seed, streams::bridge, replication);
    Matrix w(p, widths.size());
    for (Index c = 0; c < widths.size(); ++c) {
        for (Index i = 0; i < p; ++i) w(i, c) = std::sqrt(widths(c)) * rng.normal(static_cast<std::uint64_t>(c * p + i));
    }
    const Vector w1 = w.rowwise().sum();
    BridgeDraw out;
    out.w1_squared = w1.squaredNorm();
    out.pointwise.resize(lambdas.size());
    Vector partial = Vector::Zero(p);
    for (Index j = 0; j < lambdas.size(); ++j) {
        partial += w.col(j);
        const double lam = lambdas(j);
        out.pointwise(j) = (partial - lam * w1).squaredNorm() / (lam * (1.0 - lam));
    }
    out.sup_bridge = out.pointwise.maxCoeff();
    return out;
}

std::pair<double, bool> two_sided_argmax(double truncation, double h, std::uint64_t seed, std::uint64_t replication) {
    if (!(h > 0.0) || !(truncation > h)) throw Error(ErrorKind::InvalidConfig, "need 0 < h < truncation");
    const auto steps = static_cast<Index>(std::llround(truncation / h));
    const NormalStream rng(seed, streams::two_sided, replication);
    const double root_h = std::sqrt(h);
    double best = 0.0;
    Index best_k = 0;
    for (int side = 0; side < 2; ++side) {
        double w = 0.0;
        const auto offset = static_cast<std::uint64_t>(side * steps);
        for (Index k = 1; k <= steps; ++k) {
            w += root_h * rng.normal(offset + static_cast<std::uint64_t>(k - 1));
            const double value = w - 0.5 * static_cast<double>(k) * h;
            if (value > best) {
                best = value;
                best_k = side == 0 ? k : -k;
            }
        }
    }
    const bool boundary = best_k == steps || best_k == -steps;
    return {static_cast<double>(best_k) * h, boundary};
}

ThresholdLimitDraw draw_threshold_limit_raw(const ThresholdLimitParams& params, const MeshSpec& mesh,
                                            std::uint64_t replication) {
    if (params.truncation < 50.0) throw Error(ErrorKind::InvalidConfig, "truncation must be at least 50");
    if (!(params.f_gamma0 > 0.0) || !(params.sigma_u > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "density and error scale must be positive");
    }
    if (params.delta0.size() != params.c.size()) throw Error(ErrorKind::DimensionMismatch, "delta0 length");
    const GPath path = simulate_g_path(params.c, params.phi, params.cov, mesh, mesh.seed, replication);
    const double quad = params.delta0.dot(path.gram() * params.delta0);
    ThresholdLimitDraw out;
    out.scale = params.sigma_u * params.sigma_u / (params.f_gamma0 * quad);
    const auto [arg, boundary] = two_sided_argmax(params.truncation, params.h, mesh.seed, replication);
    out.argmax = arg;
    out.at_boundary = boundary;
    out.value = out.scale * arg;
    return out;
}

double draw_threshold_limit(const ThresholdLimitParams& params, const MeshSpec& mesh, std::uint64_t replication) {
    const ThresholdLimitDraw d = draw_threshold_limit_raw(params, mesh, replication);
    if (d.at_boundary) throw Error(ErrorKind::ArgmaxAtBoundary, "argmax hit the truncation boundary");
    return d.value;
}

double argmax_cdf(double x) {
    if (x < 0.0) return 1.0 - argmax_cdf(-x);
    if (x > 700.0) return 1.0;
    const boost::math::normal_distribution<double> norm;
    const double r = std::sqrt(x);
    return 1.0 + std::sqrt(x / (2.0 * std::numbers::pi)) * std::exp(-x / 8.0) +
           1.5 * std::exp(x) * boost::math::cdf(norm, -1.5 * r) - 0.5 * (x + 5.0) * boost::math::cdf(norm, -0.5 * r);
}

std::string_view to_string(Functional f) noexcept {
    switch (f) {
        case Functional::SupWaldOLS_H1: return "ols-h1";
        case Functional::SupWaldOLS_H2: return "ols-h2";
        case Functional::SupWaldIVX_H1: return "ivx-h1";
        case Functional::SupWaldIVX_H2: return "ivx-h2";
        case Functional::ThresholdArgmax: return "threshold-argmax";
    }
    return "unknown";
}

Functional parse_functional(std::string_view text) {
    for (Functional f : {Functional::SupWaldOLS_H1, Functional::SupWaldOLS_H2, Functional::SupWaldIVX_H1,
                         Functional::SupWaldIVX_H2, Functional::ThresholdArgmax}) {
        if (text == to_string(f)) return f;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown functional '" + std::string(text) + "'");
}

void parallel_for(Index count, unsigned threads, const std::function<void(Index)>& body) {
    if (count <= 0) return;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<Index>(threads, count));
    if (threads == 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<Index> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const Index i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Vector simulate_functional(Functional f, const FunctionalParams& params, const MeshSpec& mesh, unsigned threads) {
    mesh.validate();
    Vector draws(mesh.reps);
    const Vector lambdas = lambda_grid(params.pi1, params.pi2, params.lambda_points);
    switch (f) {
        case Functional::SupWaldOLS_H1:
        case Functional::SupWaldOLS_H2: {
            if (params.c.size() != params.p) throw Error(ErrorKind::ConfigInvalid, "c must have p entries");
            SheetLimitParams t1{params.c, params.phi, params.cov, lambdas, params.intercept};
            const bool joint = f == Functional::SupWaldOLS_H2;
            parallel_for(mesh.reps, threads, [&](Index i) {
                const SheetDraw d = draw_sheet_limit(t1, mesh, static_cast<std::uint64_t>(i));
                draws(i) = joint ? d.sup_joint() : d.sup_linearity;
            });
            break;
        }
        case Functional::SupWaldIVX_H1:
        case Functional::SupWaldIVX_H2: {
            const bool joint = f == Functional::SupWaldIVX_H2;
            parallel_for(mesh.reps, threads, [&](Index i) {
                const BridgeDraw d = draw_bridge_limit(lambdas, params.p, mesh.seed, static_cast<std::uint64_t>(i));
                draws(i) = joint ? d.joint() : d.sup_bridge;
            });
            break;
        }
        case Functional::ThresholdArgmax: {
            if (params.c.size() != params.p) throw Error(ErrorKind::ConfigInvalid, "c must have p entries");
            ThresholdLimitParams tl{params.c, params.phi, params.cov, params.delta0, params.f_gamma0,
                                    params.sigma_u, params.truncation, 0.01};
            parallel_for(mesh.reps, threads, [&](Index i) {
                draws(i) = draw_threshold_limit(tl, mesh, static_cast<std::uint64_t>(i));
            });
            break;
        }
    }
    return draws;
}

double quantile_sorted(const std::vector<double>& sorted, double level) {
    if (sorted.empty()) throw Error(ErrorKind::InvalidConfig, "quantile of an empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

/// Type-7 quantile of unsorted data; reorders `data`.
double quantile_select(std::vector<double>& data, double level) {
    const double h = static_cast<double>(data.size() - 1) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(lo), data.end());
    const double a = data[lo];
    if (lo + 1 >= data.size()) return a;
    const double b = *std::min_element(data.begin() + static_cast<std::ptrdiff_t>(lo) + 1, data.end());
    return a + (h - static_cast<double>(lo)) * (b - a);
}

std::vector<double> normalized_levels(std::vector<double> levels) {
    if (levels.empty()) throw Error(ErrorKind::InvalidConfig, "no quantile levels requested");
    for (double l : levels) {
        if (!(l > 0.0 && l < 1.0)) throw Error(ErrorKind::InvalidConfig, "levels must lie in (0,1)");
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

}  // namespace

CriticalValueTable table_from_draws(Functional f, const FunctionalParams& params, std::vector<double> levels,
                                    const MeshSpec& mesh, const Vector& draws, Index bootstrap) {
    CriticalValueTable table;
    table.functional = f;
    table.params = params;
    table.levels = normalized_levels(std::move(levels));
    table.reps = draws.size();
    table.steps = mesh.steps;
    table.seed = mesh.seed;
    table.version = TPR_VERSION;
    table.sorted_draws.assign(draws.data(), draws.data() + draws.size());
    std::sort(table.sorted_draws.begin(), table.sorted_draws.end());
    for (double l : table.levels) table.quantiles.push_back(quantile_sorted(table.sorted_draws, l));

    // Nonparametric bootstrap of each quantile with a fixed resampling stream.
    const std::size_t N = table.sorted_draws.size();
    std::vector<double> sum(table.levels.size(), 0.0), sum_sq(table.levels.size(), 0.0);
    std::vector<double> resample(N);
    for (Index b = 0; b < bootstrap; ++b) {
        const NormalStream rng(mesh.seed, streams::bootstrap, static_cast<std::uint64_t>(b));
        for (std::size_t i = 0; i < N; ++i) {
            const auto idx = static_cast<std::size_t>(rng.uniform(i) * static_cast<double>(N));
            resample[i] = table.sorted_draws[std::min(idx, N - 1)];
        }
        for (std::size_t j = 0; j < table.levels.size(); ++j) {
            const double q = quantile_select(resample, table.levels[j]);
            sum[j] += q;
            sum_sq[j] += q * q;
        }
    }
    for (std::size_t j = 0; j < table.levels.size(); ++j) {
        if (bootstrap < 2) {
            table.std_errors.push_back(0.0);
            continue;
        }
        const double B = static_cast<double>(bootstrap);
        const double var = (sum_sq[j] - sum[j] * sum[j] / B) / (B - 1.0);
        table.std_errors.push_back(std::sqrt(std::max(var, 0.0)));
    }
    return table;
}

CriticalValueTable tabulate_critical_values(Functional f, const FunctionalParams& params, std::vector<double> levels,
                                            const MeshSpec& mesh, unsigned threads, Index bootstrap) {
    auto normalized = normalized_levels(std::move(levels));
    const Vector draws = simulate_functional(f, params, mesh, threads);
    return table_from_draws(f, params, std::move(normalized), mesh, draws, bootstrap);
}

double CriticalValueTable::pvalue(double stat) const {
    if (!sorted_draws.empty()) {
        const auto above = sorted_draws.end() - std::lower_bound(sorted_draws.begin(), sorted_draws.end(), stat);
        return static_cast<double>(above) / static_cast<double>(sorted_draws.size());
    }
    if (quantiles.empty()) throw Error(ErrorKind::MissingCriticalValues, "table has no quantiles");
    if (stat <= quantiles.front()) return 1.0 - levels.front();
    if (stat >= quantiles.back()) return 1.0 - levels.back();
    for (std::size_t j = 1; j < quantiles.size(); ++j) {
        if (stat <= quantiles[j]) {
            const double span = quantiles[j] - quantiles[j - 1];
            const double w = span > 0.0 ? (stat - quantiles[j - 1]) / span : 1.0;
            return 1.0 - (levels[j - 1] + w * (levels[j] - levels[j - 1]));
        }
    }
    return 1.0 - levels.back();
}

double CriticalValueTable::critical_value(double level) const {
    if (!sorted_draws.empty()) return quantile_sorted(sorted_draws, level);
    for (std::size_t j = 0; j < levels.size(); ++j) {
        if (std::abs(levels[j] - level) < 1e-12) return quantiles[j];
    }
    throw Error(ErrorKind::MissingCriticalValues, "level " + std::to_string(level) + " not tabulated");
}

}  // namespace tpr
