#include "tpr/wald.hpp"

#include <cmath>

namespace tpr {

std::string_view to_string(HypothesisKind kind) noexcept {
    switch (kind) {
        case HypothesisKind::LinearityOnly: return "linearity";
        case HypothesisKind::JointLinearityPredictability: return "joint";
        case HypothesisKind::RegimeSlopesZero: return "regime-slopes";
    }
    return "unknown";
}

std::string_view to_string(Estimator e) noexcept { return e == Estimator::OLS ? "ols" : "ivx"; }

HypothesisKind parse_hypothesis(std::string_view text) {
    if (text == "linearity" || text == "h1") return HypothesisKind::LinearityOnly;
    if (text == "joint" || text == "h2") return HypothesisKind::JointLinearityPredictability;
    if (text == "regime-slopes" || text == "slopes") return HypothesisKind::RegimeSlopesZero;
    throw Error(ErrorKind::InvalidConfig, "unknown hypothesis '" + std::string(text) + "'");
}

Estimator parse_estimator(std::string_view text) {
    if (text == "ols") return Estimator::OLS;
    if (text == "ivx") return Estimator::IVX;
    throw Error(ErrorKind::InvalidConfig, "unknown estimator '" + std::string(text) + "'");
}

Hypothesis make_hypothesis(HypothesisKind kind, Estimator estimator, Index p, bool has_intercept) {
    Hypothesis h;
    h.kind = kind;
    h.estimator = estimator;
    if (estimator == Estimator::IVX) {
        h.param = Parameterization::TwoRegime;
        if (kind == HypothesisKind::LinearityOnly) {
            h.R.resize(p, 2 * p);
            h.R << Matrix::Identity(p, p), -Matrix::Identity(p, p);
        } else {
            h.R = Matrix::Identity(2 * p, 2 * p);
        }
        h.r = Vector::Zero(h.R.rows());
        return h;
    }

    const Index k = p + (has_intercept ? 1 : 0);
    const Index off = has_intercept ? 1 : 0;
    switch (kind) {
        case HypothesisKind::LinearityOnly:
            h.param = Parameterization::BaseDelta;
            for (Index j = k; j < 2 * k; ++j) h.restricted.push_back(j);
            break;
        case HypothesisKind::JointLinearityPredictability:
            h.param = Parameterization::BaseDelta;
            for (Index j = off; j < 2 * k; ++j) h.restricted.push_back(j);
            break;
        case HypothesisKind::RegimeSlopesZero:
            h.param = Parameterization::TwoRegime;
            for (Index j = 0; j < p; ++j) h.restricted.push_back(off + j);
            for (Index j = 0; j < p; ++j) h.restricted.push_back(k + off + j);
            break;
    }
    h.R = Matrix::Zero(static_cast<Index>(h.restricted.size()), 2 * k);
    for (std::size_t i = 0; i < h.restricted.size(); ++i) h.R(static_cast<Index>(i), h.restricted[i]) = 1.0;
    h.r = Vector::Zero(h.R.rows());
    return h;
}

double wald_ols(const Sample& s, double gamma, HypothesisKind kind) {
    s.validate();
    const Hypothesis h = make_hypothesis(kind, Estimator::OLS, s.p(), s.has_intercept);
    const Matrix X = build_design(s, gamma, h.param);
    const double ssr_u = least_squares(X, s.y).ssr;
    const double sigma2 = ssr_u / static_cast<double>(s.n());

    std::vector<bool> is_restricted(static_cast<std::size_t>(X.cols()), false);
    for (Index j : h.restricted) is_restricted[static_cast<std::size_t>(j)] = true;
    std::vector<Index> free_cols;
    for (Index j = 0; j < X.cols(); ++j) {
        if (!is_restricted[static_cast<std::size_t>(j)]) free_cols.push_back(j);
    }
    Matrix Xr = X(Eigen::all, h.restricted);
    Vector y = s.y;
    if (!free_cols.empty()) {
        const Matrix Xf = X(Eigen::all, free_cols);
        const auto qr = Xf.colPivHouseholderQr();
        Xr -= Xf * qr.solve(Xr);
        y -= Xf * qr.solve(y);
    }
    const Vector eta = Xr.colPivHouseholderQr().solve(y);
    const double q = (Xr * eta).squaredNorm();
    return q / sigma2;
}

double wald_ivx(const Sample& s, double gamma, HypothesisKind kind, const Eigen::Ref<const Matrix>& instrument) {
    const IvxFit fit = ivx_fit(s, gamma, instrument);
    const Hypothesis h = make_hypothesis(kind, Estimator::IVX, s.p(), s.has_intercept);
    const Vector rb = h.R * fit.beta - h.r;
    const Matrix middle = h.R * fit.avar * h.R.transpose();
    return rb.dot(middle.ldlt().solve(rb));
}

namespace {

/// Running sums of u u' and u y over a contiguous block of sorted rows,
/// with u = (w', z')'.
struct Moments {
    Matrix gram;
    Vector cross;
    double yy = 0.0;
    Index count = 0;

    explicit Moments(Index dim) : gram(Matrix::Zero(dim, dim)), cross(Vector::Zero(dim)) {}

    void add(const Eigen::Ref<const Vector>& u, double y) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(u);
        cross += u * y;
        yy += y * y;
        ++count;
    }
    Moments finished() const {
        Moments out = *this;
        out.gram = gram.selfadjointView<Eigen::Lower>();
        return out;
    }
};

/// IVX pieces of one regime built from its moments.
struct RegimeIv {
    Matrix A;    // Z'MX
    Vector b;    // Z'My
    Matrix zmz;  // Z'MZ
    Vector xmx;  // diag X'MX
};

RegimeIv regime_iv(const Moments& m, Index p, bool intercept) {
    const Index k = p + (intercept ? 1 : 0);
    const Index xo = intercept ? 1 : 0;
    RegimeIv r;
    r.A = m.gram.block(k, xo, p, p);
    r.b = m.cross.segment(k, p);
    r.zmz = m.gram.block(k, k, p, p);
    r.xmx = m.gram.block(xo, xo, p, p).diagonal();
    if (intercept) {
        const double cnt = m.gram(0, 0);
        const Vector sz = m.gram.block(k, 0, p, 1);
        const Vector sx = m.gram.block(1, 0, p, 1);
        const double sy = m.cross(0);
        r.A -= sz * sx.transpose() / cnt;
        r.b -= sz * (sy / cnt);
        r.zmz -= sz * sz.transpose() / cnt;
        r.xmx -= sx.cwiseAbs2() / cnt;
    }
    return r;
}

void check_iv(const RegimeIv& r) {
    const Vector dz = r.zmz.diagonal();
    if ((dz.array() <= 0.0).any() || (r.xmx.array() <= 0.0).any()) {
        throw Error(ErrorKind::NearSingularInstrumentGram, "instrument or regressor has no variation in a regime");
    }
    const Matrix As =
        dz.cwiseSqrt().cwiseInverse().asDiagonal() * r.A * r.xmx.cwiseSqrt().cwiseInverse().asDiagonal();
    if (!(Eigen::PartialPivLU<Matrix>(As).rcond() >= kRankTolerance)) {
        throw Error(ErrorKind::NearSingularInstrumentGram, "instrument-regressor cross moment is singular");
    }
}

double regime_intercept_ssr(const Moments& m, bool intercept) {
    if (!intercept) return m.yy;
    const double cnt = m.gram(0, 0);
    return m.yy - m.cross(0) * m.cross(0) / cnt;
}

}  // namespace

WaldCurve sup_wald(const Sample& s, const ThresholdGrid& grid, HypothesisKind kind, Estimator estimator,
                   const IvxConfig& cfg, const std::optional<Matrix>& instrument) {
    s.validate();
    const Index n = s.n();
    const Index p = s.p();
    const bool intercept = s.has_intercept;
    const Matrix w = detail::base_regressors(s);
    const Index k = w.cols();
    const bool ivx = estimator == Estimator::IVX;

    Matrix z;
    if (ivx) {
        z = instrument ? *instrument : sample_instrument(s, cfg);
        if (z.rows() != n || z.cols() != p) throw Error(ErrorKind::DimensionMismatch, "instrument does not match sample");
    }
    const Index dim = k + (ivx ? p : 0);
    auto row_u = [&](Index t) {
        Vector u(dim);
        u.head(k) = w.row(t).transpose();
        if (ivx) u.tail(p) = z.row(t).transpose();
        return u;
    };

    // Linear-model pieces that do not depend on gamma.
    const double ssr_lin = least_squares(w, s.y).ssr;
    double ssr_base = s.y.squaredNorm();
    if (intercept) ssr_base = (s.y.array() - s.y.mean()).matrix().squaredNorm();

    const auto sorted = detail::sort_for_grid(s, grid);
    const Index G = grid.size();
    std::vector<Moments> lower, upper;
    lower.reserve(static_cast<std::size_t>(G));
    upper.assign(static_cast<std::size_t>(G), Moments(dim));
    {
        Moments acc(dim);
        Index m = 0;
        for (Index g = 0; g < G; ++g) {
            for (; m < sorted.split[static_cast<std::size_t>(g)]; ++m) {
                const Index t = sorted.order[static_cast<std::size_t>(m)];
                acc.add(row_u(t), s.y(t));
            }
            lower.push_back(acc.finished());
        }
    }
    {
        Moments acc(dim);
        Index m = n;
        for (Index g = G - 1; g >= 0; --g) {
            for (; m > sorted.split[static_cast<std::size_t>(g)]; --m) {
                const Index t = sorted.order[static_cast<std::size_t>(m - 1)];
                acc.add(row_u(t), s.y(t));
            }
            upper[static_cast<std::size_t>(g)] = acc.finished();
        }
    }

    const Hypothesis h = make_hypothesis(kind, estimator, p, intercept);
    WaldCurve curve;
    curve.estimator = estimator;
    curve.hypothesis = kind;
    curve.dof = h.dof();
    std::vector<double> gammas, values;

    for (Index g = 0; g < G; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        const Index n1 = sorted.split[gi];
        if (n1 < p + 1 || n - n1 < p + 1) {
            curve.skipped.push_back(grid.points(g));
            continue;
        }
        const Moments& lo = lower[gi];
        const Moments& hi = upper[gi];
        const Matrix g1 = lo.gram.topLeftCorner(k, k);
        const Matrix gw = g1 + hi.gram.topLeftCorner(k, k);
        const Vector b1 = lo.cross.head(k);
        const Vector bw = b1 + hi.cross.head(k);

        // Threshold columns partialled on the base columns.
        Matrix gw_inv_g1;
        Vector gw_inv_bw;
        if (!detail::solve_spd(gw, g1, gw_inv_g1) || !detail::solve_spd(gw, bw, gw_inv_bw)) {
            throw Error(ErrorKind::RankDeficient, "base Gram matrix is numerically singular");
        }
        Matrix schur = g1 - g1 * gw_inv_g1;
        schur = 0.5 * (schur + schur.transpose()).eval();
        const Vector c = b1 - g1 * gw_inv_bw;
        Vector eta;
        if (!detail::solve_spd(schur, c, eta)) {
            throw Error(ErrorKind::RankDeficient,
                        "threshold columns collinear with base columns at gamma=" + std::to_string(grid.points(g)));
        }
        const double q_lin = c.dot(eta);
        const double ssr_u = ssr_lin - q_lin;
        const double sigma2 = ssr_u / static_cast<double>(n);

        double stat = 0.0;
        if (!ivx) {
            switch (kind) {
                case HypothesisKind::LinearityOnly: stat = q_lin / sigma2; break;
                case HypothesisKind::JointLinearityPredictability: stat = (ssr_base - ssr_lin + q_lin) / sigma2; break;
                case HypothesisKind::RegimeSlopesZero:
                    stat = (regime_intercept_ssr(lo, intercept) + regime_intercept_ssr(hi, intercept) - ssr_u) / sigma2;
                    break;
            }
        } else {
            const RegimeIv r1 = regime_iv(lo, p, intercept);
            const RegimeIv r2 = regime_iv(hi, p, intercept);
            check_iv(r1);
            check_iv(r2);
            if (kind == HypothesisKind::LinearityOnly) {
                const Eigen::PartialPivLU<Matrix> lu1(r1.A), lu2(r2.A);
                const Matrix a1 = lu1.inverse(), a2 = lu2.inverse();
                const Vector d = lu1.solve(r1.b) - lu2.solve(r2.b);
                const Matrix v = sigma2 * (a1 * r1.zmz * a1.transpose() + a2 * r2.zmz * a2.transpose());
                stat = d.dot(v.ldlt().solve(d));
            } else {
                stat = (r1.b.dot(r1.zmz.ldlt().solve(r1.b)) + r2.b.dot(r2.zmz.ldlt().solve(r2.b))) / sigma2;
            }
        }
        gammas.push_back(grid.points(g));
        values.push_back(stat);
    }

    if (values.empty()) throw Error(ErrorKind::EmptyRegime, "every grid point was skipped");
    curve.gammas = Eigen::Map<const Vector>(gammas.data(), static_cast<Index>(gammas.size()));
    curve.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    Index best = 0;
    for (Index i = 1; i < curve.values.size(); ++i) {
        if (curve.values(i) > curve.values(best)) best = i;
    }
    curve.sup_stat = curve.values(best);
    curve.argmax_gamma = curve.gammas(best);
    return curve;
}

WaldCurve sup_wald_pointwise(const Sample& s, const ThresholdGrid& grid, HypothesisKind kind, Estimator estimator,
                             const IvxConfig& cfg, const std::optional<Matrix>& instrument) {
    Matrix z;
    if (estimator == Estimator::IVX) z = instrument ? *instrument : sample_instrument(s, cfg);
    WaldCurve curve;
    curve.estimator = estimator;
    curve.hypothesis = kind;
    curve.dof = make_hypothesis(kind, estimator, s.p(), s.has_intercept).dof();
    std::vector<double> gammas, values;
    for (Index g = 0; g < grid.size(); ++g) {
        const double gamma = grid.points(g);
        try {
            values.push_back(estimator == Estimator::OLS ? wald_ols(s, gamma, kind) : wald_ivx(s, gamma, kind, z));
            gammas.push_back(gamma);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyRegime) throw;
            curve.skipped.push_back(gamma);
        }
    }
    if (values.empty()) throw Error(ErrorKind::EmptyRegime, "every grid point was skipped");
    curve.gammas = Eigen::Map<const Vector>(gammas.data(), static_cast<Index>(gammas.size()));
    curve.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    Index best = 0;
    for (Index i = 1; i < curve.values.size(); ++i) {
        if (curve.values(i) > curve.values(best)) best = i;
    }
    curve.sup_stat = curve.values(best);
    curve.argmax_gamma = curve.gammas(best);
    return curve;
}

EstimatedThresholdWald wald_at_estimated_threshold(const Sample& s, const ThresholdGrid& grid, Estimator estimator,
                                                   const IvxConfig& cfg, const std::optional<Matrix>& instrument) {
    EstimatedThresholdWald out;
    out.gamma_hat = s.has_intercept ? intercept_threshold(s, grid) : estimate_threshold(s, grid).gamma_hat;
    out.estimator = estimator;
    out.dof = 2 * s.p();
    if (estimator == Estimator::OLS) {
        out.statistic = wald_ols(s, out.gamma_hat, HypothesisKind::RegimeSlopesZero);
    } else {
        const Matrix z = instrument ? *instrument : sample_instrument(s, cfg);
        out.statistic = wald_ivx(s, out.gamma_hat, HypothesisKind::RegimeSlopesZero, z);
    }
    return out;
}

}  // namespace tpr
