#include "bip/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bip/kernels.hpp"
#include "bip/logging.hpp"

namespace bip::models {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

double lambda_of(double n, double tau) { return 1.0 / (n * tau * tau); }

MultiplierSpec MultiplierSpec::constant(double c, int smoothness) {
    if (!(c >= 0.0)) throw std::invalid_argument("multiplier must be nonnegative");
    MultiplierSpec w;
    w.family_ = Family::constant;
    w.c_ = c;
    w.smoothness_ = smoothness;
    return w;
}

MultiplierSpec MultiplierSpec::raised_cosine(double c, int m, int smoothness) {
    if (!(c >= 0.0)) throw std::invalid_argument("multiplier must be nonnegative");
    if (m < 1) throw std::invalid_argument("raised cosine frequency must be >= 1");
    MultiplierSpec w;
    w.family_ = Family::raised_cosine;
    w.c_ = c;
    w.m_ = m;
    w.smoothness_ = smoothness;
    return w;
}

MultiplierSpec MultiplierSpec::tabulated(std::vector<double> samples, int smoothness) {
    if (samples.size() < 2)
        throw std::invalid_argument("tabulated multiplier needs at least 2 samples");
    for (double v : samples)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("multiplier must be nonnegative");
    MultiplierSpec w;
    w.family_ = Family::tabulated;
    w.samples_ = std::move(samples);
    w.smoothness_ = smoothness;
    return w;
}

double MultiplierSpec::eval(double x) const {
    switch (family_) {
        case Family::constant:
            return c_;
        case Family::raised_cosine:
            return c_ * (1.0 + std::cos(2.0 * kPi * m_ * x));
        case Family::tabulated: {
            const std::size_t m = samples_.size();
            const double pos = std::clamp(x, 0.0, 1.0) * static_cast<double>(m - 1);
            const std::size_t i =
                std::min(static_cast<std::size_t>(pos), m - 2);
            const double frac = pos - static_cast<double>(i);
            return samples_[i] + frac * (samples_[i + 1] - samples_[i]);
        }
    }
    return 0.0;
}

spectral::Spectrum dirichlet_spectrum(std::size_t n) {
    if (n < 1) throw std::invalid_argument("truncation level must be >= 1");
    std::vector<double> rho_sq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double kk = static_cast<double>(k + 1) * kPi;
        rho_sq[k] = kk * kk;
    }
    return spectral::make_spectrum(std::move(rho_sq), spectral::Basis::dirichlet_sine);
}

namespace {

// Adaptive Simpson on [a,b] with a pre-evaluated midpoint triple.
struct QuadResult {
    double value = 0.0;
    bool converged = true;
    double error = 0.0;
};

template <typename F>
void adaptive_simpson(const F& f, double a, double b, double fa, double fm,
                      double fb, double whole, double eps, int depth,
                      QuadResult& out) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double h = b - a;
    const double left = h / 12.0 * (fa + 4.0 * flm + fm);
    const double right = h / 12.0 * (fm + 4.0 * frm + fb);
    const double err = (left + right - whole) / 15.0;
    if (std::fabs(err) <= eps || depth <= 0) {
        out.value += left + right + err;
        if (depth <= 0 && std::fabs(err) > eps) {
            out.converged = false;
            out.error = std::max(out.error, std::fabs(err));
        }
        return;
    }
    // The halving stops at the roundoff floor of the error estimate;
    // otherwise quantization noise in the cell width forces the recursion
    // to the depth cap on plateaued subcells.
    const double half_eps = std::max(0.5 * eps, 5e-17);
    adaptive_simpson(f, a, m, fa, flm, fm, left, half_eps, depth - 1, out);
    adaptive_simpson(f, m, b, fm, frm, fb, right, half_eps, depth - 1, out);
}

template <typename F>
QuadResult integrate_with_knots(const F& f, const std::vector<double>& knots,
                                double eps_total) {
    QuadResult out;
    const double eps_cell = eps_total / static_cast<double>(knots.size() - 1);
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = knots[i];
        const double b = knots[i + 1];
        const double m = 0.5 * (a + b);
        const double fa = f(a);
        const double fm = f(m);
        const double fb = f(b);
        const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        adaptive_simpson(f, a, b, fa, fm, fb, whole, eps_cell, 28, out);
    }
    return out;
}

dense::Matrix raised_cosine_gram(double c, int m, std::size_t n) {
    dense::Matrix g(n);
    for (std::size_t j = 1; j <= n; ++j) {
        for (std::size_t k = j; k <= n; ++k) {
            double v = (j == k) ? 1.0 : 0.0;
            if (k - j == static_cast<std::size_t>(2 * m)) v += 0.5;
            if (j + k == static_cast<std::size_t>(2 * m)) v -= 0.5;
            g(j - 1, k - 1) = c * v;
            g(k - 1, j - 1) = c * v;
        }
    }
    return g;
}

std::size_t prime_at_least(std::size_t m) {
    auto is_prime = [](std::size_t v) {
        for (std::size_t d = 2; d * d <= v; ++d)
            if (v % d == 0) return false;
        return v >= 2;
    };
    std::size_t p = std::max<std::size_t>(m, 3);
    while (!is_prime(p)) ++p;
    return p;
}

dense::Matrix tabulated_gram(const MultiplierSpec& w, std::size_t n) {
    // Knots at the sample points keep the integrand smooth inside each cell.
    std::vector<double> sample_knots(w.samples().size());
    for (std::size_t i = 0; i < sample_knots.size(); ++i)
        sample_knots[i] =
            static_cast<double>(i) / static_cast<double>(sample_knots.size() - 1);

    dense::Matrix g(n);
    bool failed = false;
    double worst_err = 0.0;
    std::size_t worst_row = 0, worst_col = 0;
    for (std::size_t j = 1; j <= n; ++j) {
        for (std::size_t k = j; k <= n; ++k) {
            auto f = [&](double x) {
                return 2.0 * w.eval(x) * std::sin(j * kPi * x) * std::sin(k * kPi * x);
            };
            // Seed the grid above the oscillation frequency with a prime
            // point count: interior multiples of 1/prime can never hit the
            // sine zeros (multiples of 1/j, 1/k), so the estimate cannot
            // collapse to a spurious zero before refinement kicks in.
            const std::size_t cells = prime_at_least(2 * (j + k) + 3);
            std::vector<double> knots;
            knots.reserve(sample_knots.size() + cells + 1);
            std::size_t si = 0;
            for (std::size_t i = 0; i <= cells; ++i) {
                const double x = static_cast<double>(i) / static_cast<double>(cells);
                while (si < sample_knots.size() && sample_knots[si] < x - 1e-14)
                    knots.push_back(sample_knots[si++]);
                while (si < sample_knots.size() && sample_knots[si] <= x + 1e-14) ++si;
                knots.push_back(x);
            }
            QuadResult q = integrate_with_knots(f, knots, 1e-12);
            if (!q.converged && q.error > worst_err) {
                failed = true;
                worst_err = q.error;
                worst_row = j - 1;
                worst_col = k - 1;
            }
            g(j - 1, k - 1) = q.value;
            g(k - 1, j - 1) = q.value;
        }
    }
    if (failed) throw QuadratureError(worst_row, worst_col);
    return g;
}

}  // namespace

spectral::OperatorRep multiplication_gram(const MultiplierSpec& w,
                                          const spectral::Spectrum& spectrum) {
    if (spectrum.basis != spectral::Basis::dirichlet_sine)
        throw std::invalid_argument("multiplication_gram needs the sine basis");
    const std::size_t n = spectrum.size();
    switch (w.family()) {
        case MultiplierSpec::Family::constant:
            return spectral::OperatorRep::diagonal(
                std::vector<double>(n, w.coefficient()), w.coefficient() > 0.0);
        case MultiplierSpec::Family::raised_cosine:
            return spectral::OperatorRep::dense_symmetric(
                raised_cosine_gram(w.coefficient(), w.frequency(), n), false);
        case MultiplierSpec::Family::tabulated:
            return spectral::OperatorRep::dense_symmetric(tabulated_gram(w, n), false);
    }
    throw std::logic_error("unreachable multiplier family");
}

namespace {

std::vector<double> power_of(const std::vector<double>& base, double p) {
    std::vector<double> out(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) out[k] = std::pow(base[k], p);
    return out;
}

// diag(d) + gram, as a diagonal rep when the gram is diagonal.
spectral::OperatorRep add_gram(const std::vector<double>& d,
                               const spectral::OperatorRep& gram) {
    if (gram.kind() == spectral::OpKind::diagonal) {
        std::vector<double> sum(d);
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += gram.values()[k];
        return spectral::OperatorRep::diagonal(std::move(sum), true);
    }
    dense::Matrix m = gram.matrix();
    for (std::size_t k = 0; k < d.size(); ++k) m(k, k) += d[k];
    return spectral::OperatorRep::dense_symmetric(std::move(m), true);
}

spectral::OperatorRep invert_spd(const spectral::OperatorRep& op) {
    if (op.kind() == spectral::OpKind::diagonal)
        return spectral::OperatorRep::diagonal(power_of(op.values(), -1.0), true);
    auto ch = dense::Cholesky::factor(op.matrix());
    return spectral::OperatorRep::dense_symmetric(ch.inverse(), true);
}

// (diag(d) + gram)^{-2}, the smoothing covariance construction.
spectral::OperatorRep inverse_square(const std::vector<double>& d,
                                     const spectral::OperatorRep& gram) {
    spectral::OperatorRep s = add_gram(d, gram);
    if (s.kind() == spectral::OpKind::diagonal)
        return spectral::OperatorRep::diagonal(power_of(s.values(), -2.0), true);
    dense::Matrix sq = dense::matmul(s.matrix(), s.matrix());
    auto ch = dense::Cholesky::factor(sq);
    return spectral::OperatorRep::dense_symmetric(ch.inverse(), true);
}

void check_schedule(double tau, double n) {
    if (!(tau > 0.0) || !(n > 0.0))
        throw std::invalid_argument("tau and n must be positive");
}

ProblemSetup finish_setup(spectral::Spectrum spectrum, spectral::OperatorRep a_inv,
                          spectral::OperatorRep c0, spectral::OperatorRep c1,
                          spectral::ScaleParams params, ModelSpec spec) {
    ProblemSetup setup;
    setup.spectrum = std::move(spectrum);
    setup.a_inv = std::move(a_inv);
    setup.c0 = std::move(c0);
    setup.c1 = std::move(c1);
    setup.tau = spec.tau;
    setup.n = spec.n;
    setup.lambda = lambda_of(spec.n, spec.tau);
    setup.params = params;
    setup.spec = std::move(spec);
    return setup;
}

}  // namespace

ProblemSetup build_diagonal(std::size_t n_trunc, double alpha, double t_exp,
                            double r_exp, double tau, double n,
                            spectral::Basis basis) {
    check_schedule(tau, n);
    if (!(alpha > 0.5)) throw std::invalid_argument("alpha must exceed 1/2");
    if (!(t_exp >= 0.0) || !(r_exp >= 0.0))
        throw std::invalid_argument("exponents must be nonnegative");

    spectral::Spectrum spectrum =
        basis == spectral::Basis::dirichlet_sine
            ? dirichlet_spectrum(n_trunc)
            : [&] {
                  std::vector<double> rho_sq(n_trunc);
                  for (std::size_t k = 0; k < n_trunc; ++k) {
                      const double kk = static_cast<double>(k + 1);
                      rho_sq[k] = kk * kk;
                  }
                  return spectral::make_spectrum(std::move(rho_sq),
                                                 spectral::Basis::abstract_power);
              }();

    auto a_inv = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -t_exp), true);
    auto c1 = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -r_exp), true);
    auto c0 = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -alpha), true);
    auto params =
        spectral::make_scale_params(t_exp / alpha, r_exp / alpha, 0.5 / alpha);

    ModelSpec spec;
    spec.family = Family::diagonal;
    spec.trunc = n_trunc;
    spec.basis = spectrum.basis;
    spec.alpha = alpha;
    spec.t_exp = t_exp;
    spec.r_exp = r_exp;
    spec.tau = tau;
    spec.n = n;
    return finish_setup(std::move(spectrum), std::move(a_inv), std::move(c0),
                        std::move(c1), params, std::move(spec));
}

namespace {

// Forward map shared by the Galerkin builders: inverse of the truncated
// section of diag(base) + M_q.
spectral::OperatorRep galerkin_inverse(const std::vector<double>& base,
                                       const MultiplierSpec& q,
                                       const spectral::Spectrum& spectrum) {
    spectral::OperatorRep gram = multiplication_gram(q, spectrum);
    return invert_spd(add_gram(base, gram));
}

}  // namespace

ProblemSetup build_galerkin_white_noise(std::size_t n_trunc, const MultiplierSpec& q,
                                        double tau, double n) {
    check_schedule(tau, n);
    if (q.smoothness_order() < 2)
        throw std::invalid_argument("forward perturbation needs smoothness order >= 2");

    spectral::Spectrum spectrum = dirichlet_spectrum(n_trunc);
    auto a_inv = galerkin_inverse(spectrum.rho_sq, q, spectrum);
    auto c0 = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -2.0), true);
    auto c1 = spectral::OperatorRep::identity(n_trunc);
    auto params = spectral::make_scale_params(0.5, 0.0, 0.25);

    ModelSpec spec;
    spec.family = Family::galerkin_white_noise;
    spec.trunc = n_trunc;
    spec.basis = spectrum.basis;
    spec.alpha = 2.0;
    spec.ell = 0.5;
    spec.beta = 0.0;
    spec.q = q;
    spec.tau = tau;
    spec.n = n;
    return finish_setup(std::move(spectrum), std::move(a_inv), std::move(c0),
                        std::move(c1), params, std::move(spec));
}

ProblemSetup build_galerkin_smooth_noise(std::size_t n_trunc, const MultiplierSpec& q,
                                         const MultiplierSpec& r, double tau,
                                         double n) {
    check_schedule(tau, n);
    if (q.smoothness_order() < 2)
        throw std::invalid_argument("forward perturbation needs smoothness order >= 2");
    if (r.smoothness_order() < 4)
        throw std::invalid_argument("noise perturbation needs smoothness order >= 4");

    spectral::Spectrum spectrum = dirichlet_spectrum(n_trunc);
    auto a_inv = galerkin_inverse(spectrum.rho_sq, q, spectrum);
    auto c0 = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -2.0), true);

    auto quarter = power_of(spectrum.rho_sq, 0.25);
    auto c1 = inverse_square(quarter, multiplication_gram(r, spectrum));
    auto params = spectral::make_scale_params(0.5, 0.25, 0.25);

    ModelSpec spec;
    spec.family = Family::galerkin_smooth_noise;
    spec.trunc = n_trunc;
    spec.basis = spectrum.basis;
    spec.alpha = 2.0;
    spec.ell = 0.5;
    spec.beta = 0.25;
    spec.q = q;
    spec.r = r;
    spec.tau = tau;
    spec.n = n;
    return finish_setup(std::move(spectrum), std::move(a_inv), std::move(c0),
                        std::move(c1), params, std::move(spec));
}

ProblemSetup build_general(std::size_t n_trunc, double alpha, double ell,
                           double beta, const MultiplierSpec& q,
                           const MultiplierSpec& r, double tau, double n) {
    check_schedule(tau, n);
    if (!(alpha > 0.5)) throw std::invalid_argument("alpha must exceed 1/2");
    if (!(ell > 0.0) || !(beta > 0.0))
        throw std::invalid_argument("ell and beta must be positive");

    spectral::Spectrum spectrum = dirichlet_spectrum(n_trunc);
    auto forward_base = power_of(spectrum.rho_sq, ell * alpha);
    auto a_inv = invert_spd(add_gram(forward_base, multiplication_gram(q, spectrum)));
    auto c0 = spectral::OperatorRep::diagonal(power_of(spectrum.rho_sq, -alpha), true);

    auto noise_base = power_of(spectrum.rho_sq, beta * alpha / 2.0);
    auto c1 = inverse_square(noise_base, multiplication_gram(r, spectrum));
    auto params = spectral::make_scale_params(ell, beta, 0.5 / alpha);

    ModelSpec spec;
    spec.family = Family::general;
    spec.trunc = n_trunc;
    spec.basis = spectrum.basis;
    spec.alpha = alpha;
    spec.ell = ell;
    spec.beta = beta;
    spec.q = q;
    spec.r = r;
    spec.tau = tau;
    spec.n = n;
    return finish_setup(std::move(spectrum), std::move(a_inv), std::move(c0),
                        std::move(c1), params, std::move(spec));
}

ProblemSetup build_from_spec(const ModelSpec& spec) {
    switch (spec.family) {
        case Family::diagonal:
            return build_diagonal(spec.trunc, spec.alpha, spec.t_exp, spec.r_exp,
                                  spec.tau, spec.n, spec.basis);
        case Family::galerkin_white_noise:
            return build_galerkin_white_noise(spec.trunc, spec.q, spec.tau, spec.n);
        case Family::galerkin_smooth_noise:
            return build_galerkin_smooth_noise(spec.trunc, spec.q, spec.r, spec.tau,
                                               spec.n);
        case Family::general:
            return build_general(spec.trunc, spec.alpha, spec.ell, spec.beta, spec.q,
                                 spec.r, spec.tau, spec.n);
    }
    throw std::logic_error("unreachable model family");
}

bool AssumptionReport::all_pass() const {
    for (const auto& s : stats)
        if (!s.pass) return false;
    return true;
}

namespace {

// Powers of C1 needed by the probes, shared across one eigendecomposition
// when C1 is dense.
struct NoisePowers {
    spectral::OperatorRep half;
    spectral::OperatorRep minus_half;
    spectral::OperatorRep inverse;
};

NoisePowers noise_powers(const spectral::OperatorRep& c1) {
    if (c1.kind() == spectral::OpKind::diagonal) {
        return {spectral::fractional_power(c1, 0.5),
                spectral::fractional_power(c1, -0.5),
                spectral::fractional_power(c1, -1.0)};
    }
    dense::SymEigen eig = dense::sym_eigen(c1.matrix());
    for (std::size_t k = 0; k < eig.values.size(); ++k)
        if (!(eig.values[k] > 0.0)) throw dense::SpdError(k);

    auto build = [&](double p) {
        dense::Matrix vd = eig.vectors;
        std::vector<double> powered(eig.values.size());
        for (std::size_t k = 0; k < powered.size(); ++k)
            powered[k] = std::pow(eig.values[k], p);
        dense::scale_cols(vd, powered);
        return spectral::OperatorRep::dense_symmetric(
            dense::matmul(vd, dense::transpose(eig.vectors)), true);
    };
    return {build(0.5), build(-0.5), build(-1.0)};
}

double norm2(const spectral::CoefVector& u) {
    return std::sqrt(kernels::dot(u.data(), u.data(), u.size()));
}

// || diag((lambda^2)^p) u ||.
double scaled_norm(const std::vector<double>& lam_sq, double p,
                   const spectral::CoefVector& u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k)
        acc += std::pow(lam_sq[k], 2.0 * p) * u[k] * u[k];
    return std::sqrt(acc);
}

void scale_in_place(const std::vector<double>& lam_sq, double p,
                    spectral::CoefVector& u) {
    for (std::size_t k = 0; k < u.size(); ++k) u[k] *= std::pow(lam_sq[k], p);
}

struct RatioRange {
    double lo = 0.0;
    double hi = 0.0;
    bool seen = false;

    void include(double r) {
        if (!seen) {
            lo = hi = r;
            seen = true;
        } else {
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
};

struct LevelStats {
    std::vector<RatioRange> per_assumption;
};

LevelStats probe_level(const ProblemSetup& s, std::size_t probes) {
    const std::size_t n = s.size();
    const auto& lam_sq = s.c0.values();
    const double ell = s.params.ell;
    const double beta = s.params.beta;
    const double s0 = s.params.s0;
    NoisePowers c1p = noise_powers(s.c1);

    std::vector<double> s_grid;
    for (double v : {s0 + 0.05, 0.5, 1.0})
        if (v > s0 && v <= 1.0 &&
            (s_grid.empty() || std::fabs(v - s_grid.back()) > 1e-12))
            s_grid.push_back(v);

    const double rho_lo = std::ceil(beta - s0 - 1.0);
    const double rho_hi = beta - s0;
    const std::vector<double> rho_grid = {rho_lo, rho_lo + 0.5 * (rho_hi - rho_lo),
                                          rho_lo + 0.95 * (rho_hi - rho_lo)};

    const double eta_lo = beta - 2.0 * ell;
    const std::vector<double> eta_grid = {eta_lo, 0.5 * (eta_lo + 1.0), 1.0};

    LevelStats stats;
    stats.per_assumption.resize(5);

    std::mt19937_64 gen(0x5eedu + n);
    std::normal_distribution<double> dist(0.0, 1.0);

    auto each_probe = [&](auto&& body) {
        spectral::CoefVector u(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            u[k] = 1.0;
            body(u);
            u[k] = 0.0;
        }
        for (std::size_t p = 0; p < probes; ++p) {
            for (double& x : u) x = dist(gen);
            const double nm = norm2(u);
            for (double& x : u) x /= nm;
            body(u);
        }
    };

    each_probe([&](const spectral::CoefVector& u) {
        // Two-sided: whitened forward map against the matching scale power.
        {
            auto au = spectral::apply_operator(s.a_inv, u);
            const double lhs = norm2(spectral::apply_operator(c1p.minus_half, au));
            const double rhs = scaled_norm(lam_sq, ell - 0.5 * beta, u);
            if (rhs > 0.0) stats.per_assumption[0].include(lhs / rhs);
        }
        // Smoothing of the noise root.
        for (double rho : rho_grid) {
            auto cu = spectral::apply_operator(c1p.half, u);
            scale_in_place(lam_sq, -0.5 * rho, cu);
            const double rhs = scaled_norm(lam_sq, 0.5 * (beta - rho), u);
            if (rhs > 0.0) stats.per_assumption[1].include(norm2(cu) / rhs);
        }
        // Growth of the noise whitener.
        for (double sv : s_grid) {
            auto cu = spectral::apply_operator(c1p.minus_half, u);
            scale_in_place(lam_sq, 0.5 * sv, cu);
            const double rhs = scaled_norm(lam_sq, 0.5 * (sv - beta), u);
            if (rhs > 0.0) stats.per_assumption[2].include(norm2(cu) / rhs);
        }
        // Whitened forward map measured in negative scales.
        for (double sv : s_grid) {
            auto au = spectral::apply_operator(s.a_inv, u);
            auto cu = spectral::apply_operator(c1p.minus_half, au);
            scale_in_place(lam_sq, -0.5 * sv, cu);
            const double rhs = scaled_norm(lam_sq, 0.5 * (2.0 * ell - beta - sv), u);
            if (rhs > 0.0) stats.per_assumption[3].include(norm2(cu) / rhs);
        }
        // Forward map against the noise precision.
        for (double eta : eta_grid) {
            auto cu = spectral::apply_operator(c1p.inverse, u);
            auto au = spectral::apply_operator(s.a_inv, cu);
            scale_in_place(lam_sq, 0.5 * eta, au);
            const double rhs = scaled_norm(lam_sq, 0.5 * eta + ell - beta, u);
            if (rhs > 0.0) stats.per_assumption[4].include(norm2(au) / rhs);
        }
    });
    return stats;
}

}  // namespace

AssumptionReport verify_assumptions(const ProblemSetup& setup, std::size_t probes,
                                    std::size_t n2) {
    if (n2 <= setup.size())
        throw std::invalid_argument("refinement level must exceed the base truncation");

    LevelStats coarse = probe_level(setup, probes);

    ModelSpec fine_spec = setup.spec;
    fine_spec.trunc = n2;
    ProblemSetup fine = build_from_spec(fine_spec);
    LevelStats fs = probe_level(fine, probes);

    static const char* names[5] = {
        "whitened_forward_two_sided", "noise_root_smoothing",
        "noise_whitening_growth", "whitened_forward_smoothing",
        "precision_weighted_forward"};

    AssumptionReport report;
    report.probes = probes;
    report.trunc_coarse = setup.size();
    report.trunc_fine = n2;
    for (std::size_t i = 0; i < 5; ++i) {
        AssumptionStat st;
        st.name = names[i];
        st.min_ratio = coarse.per_assumption[i].lo;
        st.max_ratio = coarse.per_assumption[i].hi;
        st.max_ratio_fine = fs.per_assumption[i].hi;
        st.drift = std::fabs(st.max_ratio_fine - st.max_ratio) /
                   std::max(st.max_ratio, 1e-300);
        st.pass = st.drift < 0.10;
        report.stats.push_back(std::move(st));
    }
    return report;
}

double multiplier_conjugation_norm(const MultiplierSpec& w, std::size_t n_trunc,
                                   double t) {
    spectral::Spectrum spectrum = dirichlet_spectrum(n_trunc);
    spectral::OperatorRep gram = multiplication_gram(w, spectrum);
    dense::Matrix m = gram.to_matrix();
    dense::scale_rows(m, power_of(spectrum.rho_sq, t));
    dense::scale_cols(m, power_of(spectrum.rho_sq, -t));
    return dense::spectral_norm(m);
}

}  // namespace bip::models
