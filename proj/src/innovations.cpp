#include "tpr/innovations.hpp"

#include "tpr/rng.hpp"

namespace tpr {

CovarianceSpec CovarianceSpec::identity(Index p, Index d) {
    CovarianceSpec spec;
    spec.sigma_y = 1.0;
    spec.sigma_xx = Matrix::Identity(p, p);
    spec.sigma_phiphi = Matrix::Identity(d, d);
    spec.cross_xy = Vector::Zero(p);
    spec.cross_xphi = Matrix::Zero(p, d);
    return spec;
}

CovarianceSpec CovarianceSpec::with_endogeneity(Index p, Index d, double rho) {
    CovarianceSpec spec = identity(p, d);
    spec.cross_xy.setConstant(rho);
    return spec;
}

Matrix assemble_covariance(const CovarianceSpec& spec) {
    const Index p = spec.sigma_xx.rows();
    const Index d = spec.sigma_phiphi.rows();
    if (spec.sigma_xx.cols() != p || spec.sigma_phiphi.cols() != d || spec.cross_xy.size() != p ||
        spec.cross_xphi.rows() != p || spec.cross_xphi.cols() != d) {
        throw Error(ErrorKind::DimensionMismatch, "covariance blocks have inconsistent shapes");
    }
    if (p < 1) throw Error(ErrorKind::DimensionMismatch, "at least one regressor is required");

    const Index w = 1 + p + d;
    Matrix full = Matrix::Zero(w, w);
    full(0, 0) = spec.sigma_y;
    full.block(1, 1, p, p) = spec.sigma_xx;
    full.block(1 + p, 1 + p, d, d) = spec.sigma_phiphi;
    full.block(1, 0, p, 1) = spec.cross_xy;
    full.block(0, 1, 1, p) = spec.cross_xy.transpose();
    full.block(1, 1 + p, p, d) = spec.cross_xphi;
    full.block(1 + p, 1, d, p) = spec.cross_xphi.transpose();

    if (!full.isApprox(full.transpose(), 1e-12)) {
        throw Error(ErrorKind::NotPositiveDefinite, "covariance is not symmetric");
    }
    Eigen::LLT<Matrix> llt(full);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "Cholesky factorization failed");
    }
    return full;
}

Matrix covariance_factor(const CovarianceSpec& spec) {
    const Matrix full = assemble_covariance(spec);
    return Eigen::LLT<Matrix>(full).matrixL();
}

InnovationPanel draw_innovations(const CovarianceSpec& spec, Index n, std::uint64_t seed,
                                 std::uint64_t replication) {
    if (n < 2) throw Error(ErrorKind::InvalidSampleSize, "innovation panel needs n >= 2");
    const Matrix chol = covariance_factor(spec);
    const Index w = chol.rows();
    const NormalStream rng(seed, streams::innovations, replication);

    Matrix z(n, w);
    for (Index t = 0; t < n; ++t) {
        for (Index j = 0; j < w; ++j) z(t, j) = rng.normal(static_cast<std::uint64_t>(t * w + j));
    }

    InnovationPanel panel;
    panel.draws = z * chol.transpose();
    panel.p = spec.p();
    panel.d = spec.d();
    panel.seed = seed;
    panel.replication = replication;
    return panel;
}

}  // namespace tpr
