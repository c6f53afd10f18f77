#pragma once

#include <cstddef>

#include "bip/dense.hpp"
#include "bip/models.hpp"
#include "bip/spectral.hpp"

namespace bip::posterior {

// Gaussian posterior N(mean, covariance) with covariance = (1/n) B^{-1},
// where B is the regularized precision operator. Immutable once built.
struct GaussianPosterior {
    spectral::CoefVector mean;
    spectral::OperatorRep precision;  // B, dense symmetric SPD
    double n = 1.0;
    dense::Matrix covariance;
    double trace_cov = 0.0;
};

// G = L^{-1} A^{-1} where C1 = L Lt, the noise-whitened forward map: the
// data misfit is ||G u - L^{-1} y||^2 and Gt G = A^{-1} C1^{-1} A^{-1}.
dense::Matrix whitened_forward(const models::ProblemSetup& setup);

// B = A^{-1} C1^{-1} A^{-1} + lambda C0^{-1}, assembled SPD by construction
// as Gt G + lambda C0^{-1}, so the noise precision is applied by triangular
// solve rather than explicit inversion.
spectral::OperatorRep assemble_precision(const models::ProblemSetup& setup);

// Solves B m = A^{-1} C1^{-1} y.
spectral::CoefVector posterior_mean(const models::ProblemSetup& setup,
                                    const spectral::CoefVector& y);

// Independent route to the same mean through the data-space system:
// m = C0 A^{-1} (A^{-1} C0 A^{-1} + lambda C1)^{-1} y.
spectral::CoefVector posterior_mean_covform(const models::ProblemSetup& setup,
                                            const spectral::CoefVector& y);

// C = tau^2 C0 - tau^2 C0 A^{-1} (A^{-1} C0 A^{-1} + lambda C1)^{-1} A^{-1} C0.
spectral::OperatorRep posterior_covariance_covform(const models::ProblemSetup& setup);

// Full posterior bundle; at truncation <= 128 the covariance is
// cross-validated against the data-space formula and n cov B = I.
GaussianPosterior posterior(const models::ProblemSetup& setup,
                            const spectral::CoefVector& y);

// Phi(u, y) = (n/2) ||C1^{-1/2} A^{-1} u||^2 - n <C1^{-1/2} y, C1^{-1/2} A^{-1} u>.
double likelihood_potential(const models::ProblemSetup& setup,
                            const spectral::CoefVector& u,
                            const spectral::CoefVector& y);

// J(u) = (n/2) ||C1^{-1/2} (y - A^{-1} u)||^2 + (1/(2 tau^2)) ||C0^{-1/2} u||^2,
// minimized by the posterior mean.
double tikhonov_objective(const models::ProblemSetup& setup,
                          const spectral::CoefVector& y,
                          const spectral::CoefVector& u);

// Hellinger distance between two posteriors sharing the same covariance:
// sqrt(1 - exp(-(1/8) ||C^{-1/2}(m1 - m2)||^2)). Covariances differing by
// more than 1e-8 relative are rejected.
double hellinger_distance(const GaussianPosterior& p1, const GaussianPosterior& p2);

}  // namespace bip::posterior
