#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bip/dense.hpp"
#include "bip/spectral.hpp"

namespace bip::models {

// Noise scaling to regularization strength: lambda = 1/(n tau^2). Single
// source of truth so stored values compare bitwise.
double lambda_of(double n, double tau);

// Nonnegative multiplier function w on (0,1) entering the perturbed
// operators. smoothness_order is the Sobolev order the function is treated
// as having when builders check their preconditions.
class MultiplierSpec {
public:
    enum class Family { constant, raised_cosine, tabulated };

    static MultiplierSpec constant(double c, int smoothness = 8);
    // c * (1 + cos(2 pi m x)); nonnegative for c >= 0, any frequency m >= 1.
    static MultiplierSpec raised_cosine(double c, int m, int smoothness = 8);
    // Piecewise-linear interpolation of equally spaced samples on [0,1].
    static MultiplierSpec tabulated(std::vector<double> samples, int smoothness = 1);

    Family family() const { return family_; }
    double coefficient() const { return c_; }
    int frequency() const { return m_; }
    const std::vector<double>& samples() const { return samples_; }
    int smoothness_order() const { return smoothness_; }

    double eval(double x) const;
    bool is_constant_zero() const { return family_ == Family::constant && c_ == 0.0; }

private:
    MultiplierSpec() = default;
    Family family_ = Family::constant;
    double c_ = 0.0;
    int m_ = 1;
    std::vector<double> samples_;
    int smoothness_ = 0;
};

struct QuadratureError : std::runtime_error {
    std::size_t row, col;
    QuadratureError(std::size_t r, std::size_t c)
        : std::runtime_error("gram quadrature failed to converge; worst entry (" +
                             std::to_string(r) + ", " + std::to_string(c) + ")"),
          row(r), col(c) {}
};

// rho_k^2 = (k pi)^2 on the unit interval, sine basis.
spectral::Spectrum dirichlet_spectrum(std::size_t n);

// Gram matrix of multiplication by w in the sine basis: entries
// 2 * int_0^1 w(x) sin(j pi x) sin(k pi x) dx. Constant and raised-cosine
// families have closed forms; tabulated multipliers are integrated by
// adaptive composite Simpson split at the sample knots, 1e-12 per entry.
spectral::OperatorRep multiplication_gram(const MultiplierSpec& w,
                                          const spectral::Spectrum& spectrum);

enum class Family { diagonal, galerkin_white_noise, galerkin_smooth_noise, general };

// Everything needed to reassemble a model at a different truncation level
// or noise schedule.
struct ModelSpec {
    Family family = Family::diagonal;
    std::size_t trunc = 0;
    spectral::Basis basis = spectral::Basis::abstract_power;
    double alpha = 1.0;
    double t_exp = 0.0;
    double r_exp = 0.0;
    double ell = 0.0;
    double beta = 0.0;
    MultiplierSpec q = MultiplierSpec::constant(0.0);
    MultiplierSpec r = MultiplierSpec::constant(0.0);
    double tau = 1.0;
    double n = 1.0;
};

struct ProblemSetup {
    spectral::Spectrum spectrum;
    spectral::OperatorRep a_inv;  // forward map A^{-1}
    spectral::OperatorRep c0;     // unscaled prior covariance, diagonal
    spectral::OperatorRep c1;     // noise covariance
    double tau = 1.0;
    double n = 1.0;
    double lambda = 1.0;
    spectral::ScaleParams params;
    ModelSpec spec;

    std::size_t size() const { return spectrum.size(); }
};

ProblemSetup build_from_spec(const ModelSpec& spec);

// Simultaneously diagonal model: A^{-1}, C1, C0 have entries
// (rho_k^2)^(-t_exp), (rho_k^2)^(-r_exp), (rho_k^2)^(-alpha) with
// rho_k^2 = k^2 for the abstract basis and (k pi)^2 for dirichlet-sine.
ProblemSetup build_diagonal(std::size_t n_trunc, double alpha, double t_exp,
                            double r_exp, double tau, double n,
                            spectral::Basis basis = spectral::Basis::abstract_power);

// Perturbed-Laplacian forward map with white observation noise:
// A^{-1} = (A0 + M_q)^{-1} on the truncated basis, C1 = I, C0 = A0^{-2}.
ProblemSetup build_galerkin_white_noise(std::size_t n_trunc, const MultiplierSpec& q,
                                        double tau, double n);

// Same forward map, smoothing noise covariance C1 = (A0^{1/4} + M_r)^{-2}.
ProblemSetup build_galerkin_smooth_noise(std::size_t n_trunc, const MultiplierSpec& q,
                                         const MultiplierSpec& r, double tau, double n);

// A = A0^(ell*alpha) + M_q, C1 = (A0^(beta*alpha/2) + M_r)^{-2},
// C0 = A0^(-alpha).
ProblemSetup build_general(std::size_t n_trunc, double alpha, double ell,
                           double beta, const MultiplierSpec& q,
                           const MultiplierSpec& r, double tau, double n);

// One scale-equivalence diagnostic: min/max of lhs/rhs ratios over probe
// vectors and exponent grid points, at the base truncation and a finer one.
struct AssumptionStat {
    std::string name;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    double max_ratio_fine = 0.0;
    double drift = 0.0;  // relative change of max_ratio between levels
    bool pass = false;
};

struct AssumptionReport {
    std::vector<AssumptionStat> stats;
    std::size_t probes = 0;
    std::size_t trunc_coarse = 0;
    std::size_t trunc_fine = 0;

    bool all_pass() const;
};

// Numerically probes the operator-equivalence inequalities relating A^{-1}
// and C1 to powers of C0, on all basis vectors plus `probes` random unit
// vectors, at truncations N and n2. A diagnostic surrogate, not a proof:
// pass means the observed constants moved by less than 10% under
// refinement.
AssumptionReport verify_assumptions(const ProblemSetup& setup, std::size_t probes,
                                    std::size_t n2);

// Spectral norm of D^t G D^{-t} where D = diag(rho_k^2) and G is the Gram
// matrix of w: bounded uniformly in the truncation level for smooth w,
// which is the mechanism making the perturbed examples fit the scale
// framework.
double multiplier_conjugation_norm(const MultiplierSpec& w, std::size_t n_trunc,
                                   double t);

}  // namespace bip::models
