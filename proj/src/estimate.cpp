#include "tpr/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tpr {

ThresholdGrid make_grid(const Eigen::Ref<const Vector>& q, Index p, double pi1, double pi2) {
    if (!(pi1 > 0.0 && pi1 < pi2 && pi2 < 1.0)) {
        throw Error(ErrorKind::InvalidGrid, "trimming must satisfy 0 < pi1 < pi2 < 1");
    }
    const Index n = q.size();
    if (n < 2) throw Error(ErrorKind::InvalidSampleSize, "threshold variable needs at least two values");
    if (!q.allFinite()) throw Error(ErrorKind::ParseError, "threshold variable has non-finite values");
    if (q.maxCoeff() == q.minCoeff()) {
        throw Error(ErrorKind::DegenerateThresholdVariable, "threshold variable is constant");
    }

    std::vector<double> sorted(q.data(), q.data() + n);
    std::sort(sorted.begin(), sorted.end());

    ThresholdGrid grid;
    grid.pi1 = pi1;
    grid.pi2 = pi2;
    grid.min_regime = std::max<Index>(p + 2, 10);

    const auto lo = static_cast<Index>(std::ceil(pi1 * static_cast<double>(n))) - 1;
    const auto hi = static_cast<Index>(std::floor(pi2 * static_cast<double>(n))) - 1;
    std::vector<double> points;
    for (Index k = std::max<Index>(lo, 0); k <= std::min(hi, n - 1); ++k) {
        const double gamma = sorted[static_cast<std::size_t>(k)];
        if (!points.empty() && points.back() == gamma) continue;
        const auto n1 = static_cast<Index>(std::upper_bound(sorted.begin(), sorted.end(), gamma) - sorted.begin());
        if (n1 >= grid.min_regime && n - n1 >= grid.min_regime) points.push_back(gamma);
    }
    if (points.empty()) {
        throw Error(ErrorKind::DegenerateThresholdVariable,
                    "no candidate threshold leaves both regimes with enough observations");
    }
    grid.points = Eigen::Map<const Vector>(points.data(), static_cast<Index>(points.size()));
    return grid;
}

Eigen::Array<bool, Eigen::Dynamic, 1> regime_indicator(const Sample& s, double gamma) {
    return s.q_lag.array() <= gamma;
}

Matrix build_design(const Sample& s, double gamma, Parameterization param) {
    const Index n = s.n();
    const Index p = s.p();
    const auto in1 = regime_indicator(s, gamma);
    const Index n1 = in1.count();
    if (n1 < p + 1 || n - n1 < p + 1) {
        throw Error(ErrorKind::EmptyRegime, "regime sizes " + std::to_string(n1) + "/" + std::to_string(n - n1) +
                                                " at gamma=" + std::to_string(gamma));
    }
    const Matrix w = detail::base_regressors(s);
    const Index k = w.cols();
    const Vector i1 = in1.cast<double>().matrix();

    Matrix X(n, 2 * k);
    if (param == Parameterization::TwoRegime) {
        X.leftCols(k) = i1.asDiagonal() * w;
        X.rightCols(k) = (Vector::Ones(n) - i1).asDiagonal() * w;
    } else {
        X.leftCols(k) = w;
        X.rightCols(k) = i1.asDiagonal() * w;
    }
    return X;
}

namespace detail {

Matrix base_regressors(const Sample& s) {
    if (!s.has_intercept) return s.x_lag;
    Matrix w(s.n(), s.p() + 1);
    w.col(0).setOnes();
    w.rightCols(s.p()) = s.x_lag;
    return w;
}

namespace {

bool equilibrated_llt(const Eigen::Ref<const Matrix>& G, Vector& scale, Eigen::LLT<Matrix>& llt) {
    const Vector diag = G.diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite()) return false;
    scale = diag.cwiseSqrt().cwiseInverse();
    llt.compute(scale.asDiagonal() * G * scale.asDiagonal());
    return llt.info() == Eigen::Success && llt.rcond() >= kRankTolerance;
}

}  // namespace

bool solve_spd(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Vector>& b, Vector& theta) {
    Vector scale;
    Eigen::LLT<Matrix> llt;
    if (!equilibrated_llt(G, scale, llt)) return false;
    theta = scale.asDiagonal() * llt.solve(scale.asDiagonal() * b);
    return true;
}

bool solve_spd(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Matrix>& B, Matrix& out) {
    Vector scale;
    Eigen::LLT<Matrix> llt;
    if (!equilibrated_llt(G, scale, llt)) return false;
    out = scale.asDiagonal() * llt.solve(scale.asDiagonal() * B);
    return true;
}

SortedSample sort_for_grid(const Sample& s, const ThresholdGrid& grid) {
    SortedSample out;
    const Index n = s.n();
    out.order.resize(static_cast<std::size_t>(n));
    std::iota(out.order.begin(), out.order.end(), Index{0});
    std::stable_sort(out.order.begin(), out.order.end(), [&](Index a, Index b) { return s.q_lag(a) < s.q_lag(b); });
    out.split.reserve(static_cast<std::size_t>(grid.size()));
    Index m = 0;
    for (Index g = 0; g < grid.size(); ++g) {
        const double gamma = grid.points(g);
        while (m < n && s.q_lag(out.order[static_cast<std::size_t>(m)]) <= gamma) ++m;
        out.split.push_back(m);
    }
    return out;
}

}  // namespace detail

LeastSquaresFit least_squares(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y) {
    if (X.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "design and response lengths differ");
    if (X.rows() < X.cols()) throw Error(ErrorKind::RankDeficient, "fewer rows than columns");
    const Matrix G = X.transpose() * X;
    Vector scale;
    {
        const Vector diag = G.diagonal();
        if ((diag.array() <= 0.0).any()) throw Error(ErrorKind::RankDeficient, "design has an all-zero column");
        scale = diag.cwiseSqrt().cwiseInverse();
        Eigen::LLT<Matrix> llt(scale.asDiagonal() * G * scale.asDiagonal());
        if (llt.info() != Eigen::Success || llt.rcond() < kRankTolerance) {
            throw Error(ErrorKind::RankDeficient, "Gram matrix is numerically singular");
        }
    }
    const Matrix Xs = X * scale.asDiagonal();
    LeastSquaresFit fit;
    fit.theta = scale.asDiagonal() * Xs.colPivHouseholderQr().solve(y);
    fit.residuals = y - X * fit.theta;
    fit.ssr = fit.residuals.squaredNorm();
    return fit;
}

LeastSquaresFit ols_fit(const Sample& s, double gamma, Parameterization param) {
    return least_squares(build_design(s, gamma, param), s.y);
}

Vector ssr_profile(const Sample& s, const ThresholdGrid& grid) {
    s.validate();
    const Index n = s.n();
    const Matrix w = detail::base_regressors(s);
    const Index k = w.cols();
    const auto sorted = detail::sort_for_grid(s, grid);
    const auto G = grid.size();

    // Regime-1 moments at each split from a forward pass, regime-2 from a backward pass.
    std::vector<Matrix> gram1(static_cast<std::size_t>(G)), gram2(static_cast<std::size_t>(G));
    std::vector<Vector> xy1(static_cast<std::size_t>(G)), xy2(static_cast<std::size_t>(G));
    {
        Matrix acc = Matrix::Zero(k, k);
        Vector accy = Vector::Zero(k);
        Index m = 0;
        for (Index g = 0; g < G; ++g) {
            const Index target = sorted.split[static_cast<std::size_t>(g)];
            for (; m < target; ++m) {
                const Index t = sorted.order[static_cast<std::size_t>(m)];
                acc.selfadjointView<Eigen::Lower>().rankUpdate(w.row(t).transpose());
                accy += w.row(t).transpose() * s.y(t);
            }
            gram1[static_cast<std::size_t>(g)] = acc.selfadjointView<Eigen::Lower>();
            xy1[static_cast<std::size_t>(g)] = accy;
        }
    }
    {
        Matrix acc = Matrix::Zero(k, k);
        Vector accy = Vector::Zero(k);
        Index m = n;
        for (Index g = G - 1; g >= 0; --g) {
            const Index target = sorted.split[static_cast<std::size_t>(g)];
            for (; m > target; --m) {
                const Index t = sorted.order[static_cast<std::size_t>(m - 1)];
                acc.selfadjointView<Eigen::Lower>().rankUpdate(w.row(t).transpose());
                accy += w.row(t).transpose() * s.y(t);
            }
            gram2[static_cast<std::size_t>(g)] = acc.selfadjointView<Eigen::Lower>();
            xy2[static_cast<std::size_t>(g)] = accy;
        }
    }

    Vector curve(G);
    Vector theta1, theta2;
    for (Index g = 0; g < G; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        const Index n1 = sorted.split[gi];
        if (n1 < s.p() + 1 || n - n1 < s.p() + 1) throw Error(ErrorKind::EmptyRegime, "grid point with empty regime");
        if (!detail::solve_spd(gram1[gi], xy1[gi], theta1) || !detail::solve_spd(gram2[gi], xy2[gi], theta2)) {
            throw Error(ErrorKind::RankDeficient, "regime Gram matrix is numerically singular at gamma=" +
                                                      std::to_string(grid.points(g)));
        }
        const double gamma = grid.points(g);
        double ssr = 0.0;
        for (Index t = 0; t < n; ++t) {
            const double fitted = s.q_lag(t) <= gamma ? w.row(t).dot(theta1) : w.row(t).dot(theta2);
            const double e = s.y(t) - fitted;
            ssr += e * e;
        }
        curve(g) = ssr;
    }
    return curve;
}

ThresholdFit estimate_threshold(const Sample& s, const ThresholdGrid& grid) {
    ThresholdFit fit;
    fit.grid = grid;
    fit.ssr_curve = ssr_profile(s, grid);
    Index best = 0;
    for (Index g = 1; g < fit.ssr_curve.size(); ++g) {
        if (fit.ssr_curve(g) < fit.ssr_curve(best)) best = g;
    }
    fit.gamma_index = best;
    fit.gamma_hat = grid.points(best);
    const auto refit = ols_fit(s, fit.gamma_hat, Parameterization::TwoRegime);
    fit.theta_hat = refit.theta;
    fit.ssr = refit.ssr;
    fit.sigma2_hat = refit.ssr / static_cast<double>(s.n());
    return fit;
}

double intercept_threshold(const Sample& s, const ThresholdGrid& grid) {
    if (grid.size() == 0) throw Error(ErrorKind::InvalidGrid, "empty threshold grid");
    const Index n = s.n();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s.q_lag(a) < s.q_lag(b); });
    const double total = s.y.sum();
    // Only the between-regime part of the SSR varies with gamma.
    double below = 0.0;
    Index count = 0;
    Index best = 0;
    double best_fit = -std::numeric_limits<double>::infinity();
    for (Index g = 0; g < grid.size(); ++g) {
        while (count < n && s.q_lag(order[static_cast<std::size_t>(count)]) <= grid.points(g)) {
            below += s.y(order[static_cast<std::size_t>(count)]);
            ++count;
        }
        if (count == 0 || count == n) throw Error(ErrorKind::EmptyRegime, "grid point leaves a regime empty");
        const double above = total - below;
        const double fit = below * below / static_cast<double>(count) + above * above / static_cast<double>(n - count);
        if (fit > best_fit) {
            best_fit = fit;
            best = g;
        }
    }
    return grid.points(best);
}

}  // namespace tpr
