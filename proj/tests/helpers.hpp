#pragma once

#include "tpr/dgp.hpp"
#include "tpr/innovations.hpp"

#include <cstdint>

namespace tpr::testing {

/// Regressor persistence with the same (c, phi) on every regressor and one
/// perturbation shock.
inline PersistenceSpec persistence(Index p, double c, double phi) {
    PersistenceSpec s;
    s.c = Vector::Constant(p, c);
    s.phi = Vector::Constant(1, phi);
    return s;
}

inline Sample null_sample(Index n, std::uint64_t seed, Index p = 1, double c = 1.0, double phi = 0.0,
                          double rho = 0.0) {
    return gen_threshold_sample(ThresholdDgpSpec::null_model(p), persistence(p, c, phi),
                                CovarianceSpec::with_endogeneity(p, 1, rho), n, seed);
}

/// Threshold sample with a fixed regime-1 slope shift delta on every regressor.
inline Sample threshold_sample(Index n, std::uint64_t seed, double delta, Index p = 1, double c = 1.0,
                               double phi = 0.0, std::uint64_t rep = 0) {
    ThresholdDgpSpec dgp = ThresholdDgpSpec::standard_design(p);
    dgp.delta0 = Vector::Constant(p, delta);
    dgp.tau = 0.0;
    return gen_threshold_sample(dgp, persistence(p, c, phi), CovarianceSpec::identity(p, 1), n, seed, rep);
}

}  // namespace tpr::testing
