#include "bip/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "bip/dense.hpp"
#include "bip/logging.hpp"
#include "bip/parallel.hpp"
#include "bip/posterior.hpp"

namespace bip::contraction {

namespace {

using dense::Cholesky;
using dense::Matrix;
using models::ProblemSetup;
using spectral::CoefVector;
using spectral::OpKind;

bool simultaneously_diagonal(const ProblemSetup& setup) {
    return setup.a_inv.kind() == OpKind::diagonal &&
           setup.c1.kind() == OpKind::diagonal;
}

const std::vector<double>& prior_diag(const ProblemSetup& setup) {
    if (setup.c0.kind() != OpKind::diagonal)
        throw std::invalid_argument("prior covariance must be diagonal");
    return setup.c0.values();
}

void check_truth(const ProblemSetup& setup, const CoefVector& u_truth) {
    if (u_truth.size() != setup.size())
        throw std::invalid_argument(
            "truth length does not match the truncation level");
}

struct ErrorSplit {
    double bias_sq = 0.0;
    double variance = 0.0;
};

ErrorSplit diagonal_split(const ProblemSetup& setup, const CoefVector& u_truth,
                          double eta) {
    const std::vector<double>& a = setup.a_inv.values();
    const std::vector<double>& c0 = setup.c0.values();
    const std::vector<double>& c1 = setup.c1.values();
    ErrorSplit out;
    for (std::size_t k = 0; k < setup.size(); ++k) {
        const double signal = a[k] * a[k] / c1[k];
        const double b = signal + setup.lambda / c0[k];
        const double weight = eta == 0.0 ? 1.0 : std::pow(c0[k], -eta);
        const double bias = setup.lambda * u_truth[k] / (c0[k] * b);
        out.bias_sq += weight * bias * bias;
        out.variance += weight * signal / (b * b);
    }
    out.variance /= setup.n;
    return out;
}

// Precision matrix, its factorization, and the pieces both error terms
// reuse: G with Gt G = A^{-1}C1^{-1}A^{-1}, and B^{-1} itself.
struct DensePieces {
    Matrix g;
    Cholesky ch;
    Matrix b_inv;
};

DensePieces dense_pieces(const ProblemSetup& setup) {
    const std::vector<double>& c0 = prior_diag(setup);
    Matrix g = posterior::whitened_forward(setup);
    Matrix b = dense::matmul(dense::transpose(g), g);
    for (std::size_t k = 0; k < setup.size(); ++k)
        b(k, k) += setup.lambda / c0[k];
    dense::symmetrize(b);
    Cholesky ch = Cholesky::factor(b);
    Matrix b_inv = ch.inverse();
    return {std::move(g), std::move(ch), std::move(b_inv)};
}

ErrorSplit dense_split(const ProblemSetup& setup, const DensePieces& pieces,
                       const CoefVector& u_truth, double eta) {
    const std::vector<double>& c0 = prior_diag(setup);
    const std::size_t n = setup.size();
    CoefVector rhs(n);
    for (std::size_t k = 0; k < n; ++k)
        rhs[k] = setup.lambda * u_truth[k] / c0[k];
    const CoefVector w = pieces.ch.solve(rhs);

    ErrorSplit out;
    for (std::size_t k = 0; k < n; ++k) {
        const double weight = eta == 0.0 ? 1.0 : std::pow(c0[k], -eta);
        out.bias_sq += weight * w[k] * w[k];
    }
    Matrix x = dense::matmul(pieces.g, pieces.b_inv);
    if (eta != 0.0) {
        std::vector<double> half(n);
        for (std::size_t k = 0; k < n; ++k) half[k] = std::pow(c0[k], -0.5 * eta);
        dense::scale_cols(x, half);
    }
    out.variance = x.frobenius_sq() / setup.n;
    return out;
}

ProblemSetup at_noise_level(const ProblemSetup& base, double tau, double n) {
    ProblemSetup setup = base;
    setup.tau = tau;
    setup.n = n;
    setup.lambda = models::lambda_of(n, tau);
    setup.spec.tau = tau;
    setup.spec.n = n;
    return setup;
}

void check_geometric(const std::vector<double>& grid, std::size_t min_points,
                     const std::string& what) {
    if (grid.size() < min_points) {
        std::ostringstream msg;
        msg << what << " grid needs at least " << min_points << " points";
        throw std::invalid_argument(msg.str());
    }
    for (double v : grid)
        if (!(v > 0.0))
            throw std::invalid_argument(what + " grid entries must be positive");
    const double step = std::log(grid[1]) - std::log(grid[0]);
    if (step == 0.0)
        throw std::invalid_argument(what + " grid entries must be distinct");
    for (std::size_t i = 2; i < grid.size(); ++i) {
        const double next = std::log(grid[i]) - std::log(grid[i - 1]);
        if (std::fabs(next - step) > 1e-6 * std::fabs(step))
            throw std::invalid_argument(what + " grid must be geometric");
    }
}

void check_schedule_domain(ScheduleRule rule, double gamma, double delta,
                           double s0, double epsilon) {
    if (!(delta > 0.0))
        throw std::invalid_argument("delta must be positive");
    if (!(s0 >= 0.0))
        throw std::invalid_argument("s0 must be nonnegative");
    if (!(epsilon >= 0.0))
        throw std::invalid_argument("epsilon must be nonnegative");
    if (!(delta > 2.0 * s0))
        throw std::invalid_argument("schedules require delta > 2*s0");
    if (!(gamma >= 1.0))
        throw std::invalid_argument("truth regularity gamma must be at least 1");
    switch (rule) {
        case ScheduleRule::contraction:
            if (!(gamma <= delta + 1.0))
                throw std::invalid_argument(
                    "gamma exceeds the saturation onset; use the saturated rule");
            break;
        case ScheduleRule::mean_error:
            if (!(gamma > 1.0 && gamma <= delta + 1.0))
                throw std::invalid_argument(
                    "mean_error rule needs gamma in (1, delta+1]");
            break;
        case ScheduleRule::contraction_saturated:
        case ScheduleRule::mean_error_saturated:
            if (!(gamma > delta + 1.0))
                throw std::invalid_argument(
                    "saturated rules need gamma above delta + 1");
            break;
        case ScheduleRule::mean_error_boundary:
            if (gamma != 1.0)
                throw std::invalid_argument("boundary rule needs gamma = 1");
            break;
        case ScheduleRule::manual:
            break;
    }
}

void warn_if_frozen(double p) {
    if (p == 0.0)
        logging::warn(
            "schedule keeps tau constant in n (p = 0); lambda still decays "
            "like 1/n");
}

double noise_second_moment(const ProblemSetup& setup, double t) {
    const std::vector<double>& c0 = prior_diag(setup);
    double sum = 0.0;
    for (std::size_t k = 0; k < setup.size(); ++k) {
        const double var_k = setup.c1.kind() == OpKind::diagonal
                                 ? setup.c1.values()[k]
                                 : setup.c1.matrix()(k, k);
        sum += std::pow(c0[k], -t) * var_k;
    }
    return sum;
}

}  // namespace

SpcTerms spc_terms(const ProblemSetup& setup, const CoefVector& u_truth) {
    check_truth(setup, u_truth);
    SpcTerms terms;
    if (simultaneously_diagonal(setup)) {
        const ErrorSplit split = diagonal_split(setup, u_truth, 0.0);
        const std::vector<double>& a = setup.a_inv.values();
        const std::vector<double>& c0 = setup.c0.values();
        const std::vector<double>& c1 = setup.c1.values();
        double trace = 0.0;
        for (std::size_t k = 0; k < setup.size(); ++k)
            trace += 1.0 / (a[k] * a[k] / c1[k] + setup.lambda / c0[k]);
        terms.bias_sq = split.bias_sq;
        terms.variance = split.variance;
        terms.trace_term = trace / setup.n;
    } else {
        const DensePieces pieces = dense_pieces(setup);
        const ErrorSplit split = dense_split(setup, pieces, u_truth, 0.0);
        double trace = 0.0;
        for (std::size_t k = 0; k < setup.size(); ++k)
            trace += pieces.b_inv(k, k);
        terms.bias_sq = split.bias_sq;
        terms.variance = split.variance;
        terms.trace_term = trace / setup.n;
    }
    terms.spc = terms.bias_sq + terms.variance + terms.trace_term;
    return terms;
}

double weighted_mean_error(const ProblemSetup& setup,
                           const CoefVector& u_truth, double eta) {
    check_truth(setup, u_truth);
    const double floor = setup.params.beta - 2.0 * setup.params.ell;
    if (!(eta >= floor && eta <= 1.0))
        throw std::invalid_argument("eta must lie in [beta - 2*ell, 1]");
    const ErrorSplit split =
        simultaneously_diagonal(setup)
            ? diagonal_split(setup, u_truth, eta)
            : dense_split(setup, dense_pieces(setup), u_truth, eta);
    return split.bias_sq + split.variance;
}

double TauSchedule::tau(double n) const {
    if (!(n > 0.0)) throw std::invalid_argument("n must be positive");
    return std::pow(n, p);
}

TauSchedule tau_schedule(ScheduleRule rule, double gamma, double delta,
                         double s0, double epsilon) {
    if (rule == ScheduleRule::manual)
        throw std::invalid_argument(
            "the manual rule takes an exponent; use manual_schedule");
    check_schedule_domain(rule, gamma, delta, s0, epsilon);

    TauSchedule schedule;
    schedule.rule = rule;
    schedule.gamma = gamma;
    schedule.delta = delta;
    schedule.s0 = s0;
    schedule.epsilon = epsilon;
    switch (rule) {
        case ScheduleRule::contraction:
        case ScheduleRule::mean_error:
            schedule.p = -(gamma - 1.0 + s0 + epsilon) /
                         (2.0 * (delta + gamma - 1.0 + s0 + epsilon));
            break;
        case ScheduleRule::contraction_saturated:
        case ScheduleRule::mean_error_saturated:
            schedule.p =
                -(delta + s0 + epsilon) / (2.0 * (2.0 * delta + s0 + epsilon));
            break;
        case ScheduleRule::mean_error_boundary:
            schedule.p =
                -(s0 + epsilon) / (2.0 * (delta + s0 + epsilon));
            break;
        case ScheduleRule::manual:
            break;
    }
    warn_if_frozen(schedule.p);
    return schedule;
}

TauSchedule manual_schedule(double p) {
    if (!(p > -0.5 && p <= 0.0))
        throw std::invalid_argument("manual exponent must lie in (-1/2, 0]");
    TauSchedule schedule;
    schedule.rule = ScheduleRule::manual;
    schedule.p = p;
    warn_if_frozen(p);
    return schedule;
}

double theoretical_exponent(const ExponentQuery& q) {
    if (!(q.epsilon >= 0.0))
        throw std::invalid_argument("epsilon must be nonnegative");
    if (!(q.gamma >= 1.0))
        throw std::invalid_argument("truth regularity gamma must be at least 1");

    const bool has_beta = !std::isnan(q.beta);
    const bool has_ell = !std::isnan(q.ell);
    if (has_beta != has_ell)
        throw std::invalid_argument("beta and ell must be supplied together");

    switch (q.target) {
        case RateTarget::contraction:
        case RateTarget::mean_error: {
            if (!(q.delta > 0.0))
                throw std::invalid_argument("delta must be positive");
            if (!(q.s0 >= 0.0 && q.delta > 2.0 * q.s0))
                throw std::invalid_argument("rates require 0 <= 2*s0 < delta");
            double noise_gap = 1.0 - q.delta;  // beta - 2*ell
            if (has_beta) {
                if (std::fabs(2.0 * q.ell - q.beta + 1.0 - q.delta) > 1e-9)
                    throw std::invalid_argument(
                        "delta must equal 2*ell - beta + 1");
                noise_gap = q.beta - 2.0 * q.ell;
            }
            const double g = std::min(q.gamma, q.delta + 1.0);
            if (q.target == RateTarget::contraction) {
                const double denom = 2.0 * (q.delta + g - 1.0 + q.s0 + q.epsilon);
                // noise rougher than the forward smoothing (beta <= 2*ell)
                // gives the full exponent; otherwise only the suboptimal one.
                return noise_gap <= 0.0 ? g / denom
                                        : (q.delta + g - 1.0) / denom;
            }
            if (!(q.theta >= 0.0 && q.theta <= 1.0))
                throw std::invalid_argument("theta must lie in [0, 1]");
            if (q.gamma == 1.0 && q.theta == 1.0)
                throw std::invalid_argument(
                    "no decay at the gamma = 1, theta = 1 corner");
            if (q.gamma <= q.delta + 1.0)
                return (q.delta + q.gamma - 1.0 - q.theta * q.delta) /
                       (q.delta + q.gamma - 1.0 + q.s0 + q.epsilon);
            return (2.0 - q.theta) * q.delta /
                   (2.0 * q.delta + q.s0 + q.epsilon);
        }
        case RateTarget::white_noise_model: {
            if (q.d < 1) throw std::invalid_argument("dimension must be >= 1");
            const double d = static_cast<double>(q.d);
            if (q.gamma < 3.0)
                return 2.0 * q.gamma / (4.0 + d + 4.0 * q.gamma + 2.0 * q.epsilon);
            return 6.0 / (16.0 + d + 2.0 * q.epsilon);
        }
        case RateTarget::smooth_noise_model: {
            if (q.d < 1) throw std::invalid_argument("dimension must be >= 1");
            const double d = static_cast<double>(q.d);
            if (q.gamma < 2.75)
                return 2.0 * q.gamma / (3.0 + d + 4.0 * q.gamma + 2.0 * q.epsilon);
            return 11.0 / (28.0 + 2.0 * d + 2.0 * q.epsilon);
        }
    }
    throw std::invalid_argument("unknown rate target");
}

double saturation_onset(double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    return 1.0 + delta;
}

std::vector<double> geometric_grid(double first, double last,
                                   std::size_t points) {
    if (points < 2)
        throw std::invalid_argument("grid needs at least two points");
    if (!(first > 0.0) || !(last > 0.0))
        throw std::invalid_argument("grid endpoints must be positive");
    if (first == last)
        throw std::invalid_argument("grid endpoints must differ");
    std::vector<double> grid(points);
    const double lo = std::log(first);
    const double step = (std::log(last) - lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = std::exp(lo + static_cast<double>(i) * step);
    grid.front() = first;
    grid.back() = last;
    return grid;
}

RateResult run_rate_experiment(const RateExperiment& experiment) {
    const std::vector<double>& grid = experiment.n_grid;
    check_geometric(grid, 4, "n");
    if (!(grid[1] > grid[0]))
        throw std::invalid_argument("n grid must increase");
    if (!(experiment.truncation_tol > 0.0))
        throw std::invalid_argument("truncation tolerance must be positive");

    const TauSchedule& schedule = experiment.schedule;

    models::ModelSpec base_spec = experiment.model;
    base_spec.tau = 1.0;
    base_spec.n = 1.0;
    const ProblemSetup base = models::build_from_spec(base_spec);
    const CoefVector truth = synthetic::make_truth(experiment.truth, base);

    if (schedule.rule != ScheduleRule::manual &&
        (std::fabs(schedule.delta - base.params.delta) > 1e-9 ||
         std::fabs(schedule.s0 - base.params.s0) > 1e-9))
        logging::warn(
            "schedule (delta, s0) differ from the model's; the attached "
            "theory target uses the schedule's values");

    RateResult result;
    result.n_grid = grid;
    result.etas = experiment.etas;
    result.tau_grid.resize(grid.size());
    result.terms.resize(grid.size());
    result.weighted_errors.assign(
        grid.size(), std::vector<double>(experiment.etas.size(), 0.0));

    parallel::for_index(grid.size(), experiment.workers, [&](std::size_t i) {
        const double n = grid[i];
        const double tau = schedule.tau(n);
        const ProblemSetup setup = at_noise_level(base, tau, n);
        result.tau_grid[i] = tau;
        result.terms[i] = spc_terms(setup, truth);
        for (std::size_t j = 0; j < experiment.etas.size(); ++j)
            result.weighted_errors[i][j] =
                weighted_mean_error(setup, truth, experiment.etas[j]);
    });

    // Certify the truncation: doubling it must leave spc at the largest n
    // essentially unchanged, otherwise the slope reflects the cutoff rather
    // than the model.
    models::ModelSpec fine_spec = experiment.model;
    fine_spec.trunc = experiment.model.trunc * 2;
    fine_spec.tau = 1.0;
    fine_spec.n = 1.0;
    const ProblemSetup fine_base = models::build_from_spec(fine_spec);
    const CoefVector fine_truth =
        synthetic::make_truth(experiment.truth, fine_base);
    const double n_top = grid.back();
    const ProblemSetup fine =
        at_noise_level(fine_base, schedule.tau(n_top), n_top);
    const double spc_coarse = result.terms.back().spc;
    const double spc_fine = spc_terms(fine, fine_truth).spc;
    result.truncation_drift = std::fabs(spc_fine - spc_coarse) / spc_coarse;
    if (result.truncation_drift > experiment.truncation_tol) {
        std::ostringstream msg;
        msg << "spc at n = " << n_top << " changes by "
            << result.truncation_drift * 100.0
            << "% when the truncation doubles from " << experiment.model.trunc
            << "; raise the truncation level until the change is below "
            << experiment.truncation_tol * 100.0 << "%";
        throw TruncationError(result.truncation_drift, msg.str());
    }

    std::vector<double> spc(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) spc[i] = result.terms[i].spc;
    const SlopeFit fit = fit_loglog_slope(grid, spc);
    result.fitted_slope = fit.slope;
    result.slope_stderr = fit.stderr_value;
    result.stderr_defined = fit.stderr_defined;

    if (schedule.rule != ScheduleRule::manual) {
        ExponentQuery query;
        query.target = RateTarget::contraction;
        query.gamma = schedule.gamma;
        query.delta = schedule.delta;
        query.s0 = schedule.s0;
        query.epsilon = schedule.epsilon;
        result.theoretical_exponent = theoretical_exponent(query);

        // The schedule presupposes finite weighted norms of the noise (in
        // expectation) and the truth; record them at both truncations.
        const double noise_gap = base.params.beta - 2.0 * base.params.ell;
        const double theta1 = (schedule.s0 + schedule.epsilon) / schedule.delta;
        const double g = std::min(schedule.gamma, schedule.delta + 1.0);
        const double theta2 = (schedule.delta + 1.0 - g) / schedule.delta;
        const double eta1 = (1.0 - theta1) * noise_gap + theta1;
        const double eta2 = (1.0 - theta2) * noise_gap + theta2;
        const double t_noise =
            2.0 * base.params.beta - 2.0 * base.params.ell - eta1;
        const double t_truth = 2.0 - eta2;

        result.noise_norm_sq = noise_second_moment(base, t_noise);
        const double truth_norm = spectral::scale_norm(truth, t_truth, base.c0);
        result.truth_norm_sq = truth_norm * truth_norm;
        result.noise_norm_growth =
            noise_second_moment(fine_base, t_noise) / result.noise_norm_sq;
        const double fine_norm =
            spectral::scale_norm(fine_truth, t_truth, fine_base.c0);
        result.truth_norm_growth =
            fine_norm * fine_norm / result.truth_norm_sq;
    }
    return result;
}

SlopeFit fit_loglog_slope(const std::vector<double>& xs,
                          const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("xs and ys must have equal length");
    const std::size_t m = xs.size();
    if (m < 2)
        throw std::invalid_argument("need at least two points to fit a slope");

    std::vector<double> lx(m), ly(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("log-log fit requires positive values");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mean_x += lx[i];
        mean_y += ly[i];
    }
    mean_x /= static_cast<double>(m);
    mean_y /= static_cast<double>(m);

    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = lx[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (ly[i] - mean_y);
    }
    if (sxx == 0.0)
        throw std::invalid_argument("xs must not be all equal");

    SlopeFit fit;
    fit.slope = sxy / sxx;
    if (m >= 3) {
        const double intercept = mean_y - fit.slope * mean_x;
        double rss = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double r = ly[i] - intercept - fit.slope * lx[i];
            rss += r * r;
        }
        fit.stderr_value =
            std::sqrt(rss / static_cast<double>(m - 2) / sxx);
        fit.stderr_defined = true;
    }
    return fit;
}

BoundCurve operator_bound_probe(const SetupFamily& family, double theta,
                                double target_t, double s,
                                const std::vector<double>& lambda_grid,
                                unsigned workers) {
    if (!family)
        throw std::invalid_argument("setup family must be callable");
    check_geometric(lambda_grid, 5, "lambda");
    if (!(theta >= 0.0 && theta <= 1.0))
        throw std::invalid_argument("theta must lie in [0, 1]");
    if (!(s >= 0.0))
        throw std::invalid_argument("s must be nonnegative");

    BoundCurve curve;
    curve.lambda_grid = lambda_grid;
    curve.theta = theta;
    curve.target_t = target_t;
    curve.s = s;
    curve.weighted_norms.assign(lambda_grid.size(), 0.0);
    curve.sandwich_norms.assign(lambda_grid.size(), 0.0);

    const ProblemSetup probe = family(lambda_grid.front());
    const double noise_gap = probe.params.beta - 2.0 * probe.params.ell;
    curve.eta = (1.0 - theta) * noise_gap + theta;
    if (!(target_t >= noise_gap - 1e-12 && target_t <= 1.0 + 1e-12))
        throw std::invalid_argument(
            "target weight must lie in [beta - 2*ell, 1]");

    parallel::for_index(lambda_grid.size(), workers, [&](std::size_t i) {
        const double lambda = lambda_grid[i];
        const ProblemSetup setup = family(lambda);
        if (!(std::fabs(setup.lambda - lambda) <= 1e-12 * lambda))
            throw std::invalid_argument(
                "family produced a setup whose lambda differs from the request");
        const std::vector<double>& c0 = prior_diag(setup);
        const std::size_t n = setup.size();

        if (simultaneously_diagonal(setup)) {
            const std::vector<double>& a = setup.a_inv.values();
            const std::vector<double>& c1 = setup.c1.values();
            double weighted = 0.0, sandwich = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double b = a[k] * a[k] / c1[k] + lambda / c0[k];
                weighted = std::max(
                    weighted,
                    std::pow(c0[k], -0.5 * (curve.eta + target_t)) / b);
                sandwich = std::max(sandwich, std::pow(c0[k], -s) / b);
            }
            curve.weighted_norms[i] = weighted;
            curve.sandwich_norms[i] = sandwich;
            return;
        }

        const Matrix b_inv =
            Cholesky::factor(posterior::assemble_precision(setup).matrix())
                .inverse();
        std::vector<double> left(n), right(n), both(n);
        for (std::size_t k = 0; k < n; ++k) {
            left[k] = std::pow(c0[k], -0.5 * target_t);
            right[k] = std::pow(c0[k], -0.5 * curve.eta);
            both[k] = std::pow(c0[k], -0.5 * s);
        }
        Matrix weighted = b_inv;
        dense::scale_rows(weighted, left);
        dense::scale_cols(weighted, right);
        curve.weighted_norms[i] = dense::spectral_norm(weighted, 1e-8);
        Matrix sandwich = b_inv;
        dense::scale_rows(sandwich, both);
        dense::scale_cols(sandwich, both);
        curve.sandwich_norms[i] = dense::spectral_norm(sandwich, 1e-8);
    });

    curve.weighted_fit = fit_loglog_slope(lambda_grid, curve.weighted_norms);
    curve.sandwich_fit = fit_loglog_slope(lambda_grid, curve.sandwich_norms);
    return curve;
}

}  // namespace bip::contraction
