#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bip/models.hpp"
#include "bip/spectral.hpp"
#include "bip/synthetic.hpp"

namespace bip::contraction {

// Exact second-moment split of the posterior error at one (tau, n). The
// noise expectation is taken in closed form, so spc is the square posterior
// contraction E||mean - u_truth||^2 + tr(covariance) without Monte Carlo.
struct SpcTerms {
    double bias_sq = 0.0;     // ||lambda B^{-1} C0^{-1} u_truth||^2
    double variance = 0.0;    // (1/n) tr(B^{-1} A^{-1}C1^{-1}A^{-1} B^{-1})
    double trace_term = 0.0;  // (1/n) tr(B^{-1})
    double spc = 0.0;         // bias_sq + variance + trace_term as stored
};

SpcTerms spc_terms(const models::ProblemSetup& setup,
                   const spectral::CoefVector& u_truth);

// Exact E||mean - u_truth||_eta^2 in the scale norm of weight eta. Requires
// eta in [beta - 2*ell, 1]; eta = 0 recovers spc minus trace_term.
double weighted_mean_error(const models::ProblemSetup& setup,
                           const spectral::CoefVector& u_truth, double eta);

// Noise-level schedules tau(n) = n^p. The theorem-backed rules pick p from
// (gamma, delta, s0, epsilon) so that the posterior contracts at the best
// rate the theory provides for a truth of regularity gamma:
//   contraction            gamma in [1, delta+1], optimal contraction rate
//   contraction_saturated  gamma > delta+1, rate capped at the saturation level
//   mean_error             gamma in (1, delta+1], optimal weighted mean error
//   mean_error_saturated   gamma > delta+1 analogue
//   mean_error_boundary    gamma = 1 boundary case
//   manual                 caller-chosen exponent p
enum class ScheduleRule {
    contraction,
    contraction_saturated,
    mean_error,
    mean_error_saturated,
    mean_error_boundary,
    manual,
};

struct TauSchedule {
    ScheduleRule rule = ScheduleRule::manual;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();
    double s0 = std::numeric_limits<double>::quiet_NaN();
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    double p = 0.0;

    double tau(double n) const;
    // lambda(n) = 1/(n tau(n)^2) = n^(-1-2p); p > -1/2 keeps this decaying.
    double lambda_exponent() const { return -1.0 - 2.0 * p; }
};

TauSchedule tau_schedule(ScheduleRule rule, double gamma, double delta,
                         double s0, double epsilon);
TauSchedule manual_schedule(double p);

// Which theoretical decay exponent to evaluate. The first two are the
// general calculators; the model-specific ones take the ambient dimension d
// of the perturbed-Laplacian examples and bake in their scale parameters.
enum class RateTarget {
    contraction,         // eps_n = n^(-e): optimized contraction exponent e
    mean_error,          // E||.||_eta^2 <= c n^(-E) at eta = (1-theta)(beta-2ell)+theta
    white_noise_model,   // perturbed Laplacian observed in white noise, dim d
    smooth_noise_model,  // same forward map with one order of noise smoothing
};

struct ExponentQuery {
    RateTarget target = RateTarget::contraction;
    double gamma = 1.0;
    double delta = 1.0;
    double s0 = 0.0;
    double epsilon = 0.0;
    // beta/ell are optional; when both are set they must be consistent with
    // delta = 2*ell - beta + 1. Only the sign of beta - 2*ell enters.
    double beta = std::numeric_limits<double>::quiet_NaN();
    double ell = std::numeric_limits<double>::quiet_NaN();
    double theta = 0.0;  // mean_error only, in [0, 1]
    int d = 1;           // model targets only
};

double theoretical_exponent(const ExponentQuery& q);

// Truth regularity beyond which the optimized rates stop improving.
double saturation_onset(double delta);

// Geometric grid from first to last inclusive (either direction), used for
// the n- and lambda-grids.
std::vector<double> geometric_grid(double first, double last,
                                   std::size_t points);

struct TruncationError : std::runtime_error {
    double drift;
    TruncationError(double drift_value, const std::string& msg)
        : std::runtime_error(msg), drift(drift_value) {}
};

// One contraction-rate experiment: a model family swept over a noise grid
// with tau set by the schedule at each n. The model's own tau/n fields are
// ignored. etas lists extra weighted mean errors to record per grid point.
struct RateExperiment {
    models::ModelSpec model;
    synthetic::TruthSpec truth;
    TauSchedule schedule;
    std::vector<double> n_grid = geometric_grid(1e3, 1e9, 7);
    std::vector<double> etas;
    double truncation_tol = 0.01;
    unsigned workers = 1;
};

// theoretical_exponent is the eps_n exponent e implied by the schedule
// (fitted_slope should approach -2e); it and the regularity diagnostics are
// NaN for manual schedules. noise/truth_norm_sq are the exact squared scale
// norms whose finiteness the schedule presupposes (noise in expectation),
// and the growth fields are their ratios under doubling the truncation, the
// finite-rank surrogate for finiteness.
struct RateResult {
    std::vector<double> n_grid;
    std::vector<double> tau_grid;
    std::vector<SpcTerms> terms;
    std::vector<double> etas;
    std::vector<std::vector<double>> weighted_errors;  // [n index][eta index]
    double fitted_slope = 0.0;
    double slope_stderr = 0.0;
    bool stderr_defined = false;
    double theoretical_exponent = std::numeric_limits<double>::quiet_NaN();
    double truncation_drift = 0.0;
    double noise_norm_sq = std::numeric_limits<double>::quiet_NaN();
    double truth_norm_sq = std::numeric_limits<double>::quiet_NaN();
    double noise_norm_growth = std::numeric_limits<double>::quiet_NaN();
    double truth_norm_growth = std::numeric_limits<double>::quiet_NaN();
};

RateResult run_rate_experiment(const RateExperiment& experiment);

// Ordinary least squares of log(y) on log(x). Two points determine the
// slope but leave the residual variance undefined, flagged instead of
// reported as zero.
struct SlopeFit {
    double slope = 0.0;
    double stderr_value = std::numeric_limits<double>::quiet_NaN();
    bool stderr_defined = false;
};

SlopeFit fit_loglog_slope(const std::vector<double>& xs,
                          const std::vector<double>& ys);

// Produces the setup at a given lambda; implementations must set
// setup.lambda to the requested value (any (n, tau) split of it is fine).
using SetupFamily = std::function<models::ProblemSetup(double lambda)>;

// Measured operator norms of B^{-1} between weighted spaces along a lambda
// grid. weighted_norms[i] is the largest singular value of
// C0^(-target_t/2) B^{-1} C0^(-eta/2), the norm from weight -eta to weight
// target_t with eta = (1-theta)(beta-2ell) + theta; sandwich_norms[i] is
// ||C0^(-s/2) B^{-1} C0^(-s/2)||.
struct BoundCurve {
    std::vector<double> lambda_grid;
    std::vector<double> weighted_norms;
    std::vector<double> sandwich_norms;
    SlopeFit weighted_fit;
    SlopeFit sandwich_fit;
    double theta = 0.0;
    double eta = 0.0;
    double target_t = 0.0;
    double s = 0.0;
};

BoundCurve operator_bound_probe(const SetupFamily& family, double theta,
                                double target_t, double s,
                                const std::vector<double>& lambda_grid,
                                unsigned workers = 1);

}  // namespace bip::contraction
