#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bip/dense.hpp"
#include "bip/logging.hpp"
#include "bip/models.hpp"
#include "bip/posterior.hpp"
#include "bip/spectral.hpp"

using bip::dense::Matrix;
using bip::models::MultiplierSpec;
using bip::models::ProblemSetup;
using bip::spectral::CoefVector;
using bip::spectral::OperatorRep;
namespace post = bip::posterior;

namespace {

CoefVector random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    CoefVector v(n);
    for (auto& x : v) x = scale * gauss(rng);
    return v;
}

CoefVector random_unit(std::mt19937_64& rng, std::size_t n) {
    CoefVector v = random_vector(rng, n);
    double s = 0.0;
    for (double x : v) s += x * x;
    const double inv = 1.0 / std::sqrt(s);
    for (auto& x : v) x *= inv;
    return v;
}

double rel_diff(const CoefVector& a, const CoefVector& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num = std::max(num, std::fabs(a[k] - b[k]));
        den = std::max({den, std::fabs(a[k]), std::fabs(b[k])});
    }
    return den == 0.0 ? num : num / den;
}

double min_eigenvalue(const Matrix& m) {
    return bip::dense::sym_eigen(m).values.front();
}

// Smooth-noise Galerkin model: every operator in play is genuinely dense.
ProblemSetup dense_setup(std::size_t n_trunc, double tau, double n) {
    return bip::models::build_galerkin_smooth_noise(
        n_trunc, MultiplierSpec::raised_cosine(1.0, 1),
        MultiplierSpec::raised_cosine(0.5, 2), tau, n);
}

// Single mode with all operators equal to 1. Its scale gap is degenerate on
// purpose, so swallow the expected warning instead of spraying stderr.
ProblemSetup scalar_setup(double tau, double n) {
    std::vector<std::string> warnings;
    bip::logging::set_warning_handler(
        [&warnings](const std::string& m) { warnings.push_back(m); });
    ProblemSetup setup = bip::models::build_diagonal(1, 1.0, 0.0, 0.0, tau, n);
    bip::logging::set_warning_handler(nullptr);
    REQUIRE(warnings.size() == 1);
    REQUIRE(warnings[0].find("degenerate") != std::string::npos);
    return setup;
}

}  // namespace

TEST_CASE("scalar problem has the hand-computed posterior") {
    // One mode, all operators equal to 1, tau = n = 1: B = 2, m = y/2,
    // covariance 1/2.
    const ProblemSetup setup = scalar_setup(1.0, 1.0);
    const OperatorRep b = post::assemble_precision(setup);
    REQUIRE(b.kind() == bip::spectral::OpKind::dense);
    CHECK(b.matrix()(0, 0) == doctest::Approx(2.0).epsilon(1e-14));

    const CoefVector y{1.0};
    const CoefVector m = post::posterior_mean(setup, y);
    CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post::posterior_mean_covform(setup, y)[0] ==
          doctest::Approx(0.5).epsilon(1e-12));

    const post::GaussianPosterior p = post::posterior(setup, y);
    CHECK(p.covariance(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.trace_cov == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post::posterior_covariance_covform(setup).matrix()(0, 0) ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero data gives zero mean") {
    const ProblemSetup setup = bip::models::build_diagonal(8, 1.0, 0.5, 0.5, 0.7, 50.0);
    const CoefVector y(8, 0.0);
    for (double mk : post::posterior_mean(setup, y)) CHECK(mk == 0.0);
}

TEST_CASE("diagonal model: precision matrix is diagonal with closed-form entries") {
    const ProblemSetup setup =
        bip::models::build_diagonal(12, 1.5, 0.5, 0.25, 0.3, 20.0,
                                    bip::spectral::Basis::dirichlet_sine);
    const OperatorRep b = post::assemble_precision(setup);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 12; ++j) {
            if (i == j) continue;
            CHECK(std::fabs(b.matrix()(i, j)) <= 1e-15);
        }
        const double a_k = setup.a_inv.values()[i];
        const double expect = a_k * a_k / setup.c1.values()[i] +
                              setup.lambda / setup.c0.values()[i];
        CHECK(b.matrix()(i, i) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("mean and covariance agree between precision and data-space forms") {
    std::mt19937_64 rng(41);

    SUBCASE("diagonal, truncation 16") {
        const ProblemSetup setup =
            bip::models::build_diagonal(16, 1.0, 0.5, 0.5, 0.4, 200.0);
        const CoefVector y = random_vector(rng, 16);
        CHECK(rel_diff(post::posterior_mean(setup, y),
                       post::posterior_mean_covform(setup, y)) < 1e-10);
    }

    SUBCASE("dense smooth-noise model, truncation 32") {
        const ProblemSetup setup = dense_setup(32, 0.5, 100.0);
        const CoefVector y = random_vector(rng, 32);
        CHECK(rel_diff(post::posterior_mean(setup, y),
                       post::posterior_mean_covform(setup, y)) < 1e-8);

        // posterior() already cross-checks the covariance at this size; the
        // explicit comparison here pins the tolerance in test code too.
        const post::GaussianPosterior p = post::posterior(setup, y);
        const Matrix alt = post::posterior_covariance_covform(setup).matrix();
        double dev = 0.0;
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j)
                dev = std::max(dev, std::fabs(p.covariance(i, j) - alt(i, j)));
        CHECK(dev < 1e-8 * alt.max_abs());
    }
}

TEST_CASE("posterior depends on (n, tau) only through lambda") {
    // (n, tau) = (4, 1/2) and (1, 1) both give lambda = 1.
    const ProblemSetup s1 = bip::models::build_diagonal(10, 1.0, 0.5, 0.0, 0.5, 4.0);
    const ProblemSetup s2 = bip::models::build_diagonal(10, 1.0, 0.5, 0.0, 1.0, 1.0);
    REQUIRE(s1.lambda == s2.lambda);

    const Matrix b1 = post::assemble_precision(s1).matrix();
    const Matrix b2 = post::assemble_precision(s2).matrix();
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(b1(i, j) == b2(i, j));

    std::mt19937_64 rng(7);
    const CoefVector y = random_vector(rng, 10);
    CHECK(rel_diff(post::posterior_mean(s1, y), post::posterior_mean(s2, y)) < 1e-14);
}

TEST_CASE("posterior covariance never exceeds the prior covariance") {
    const ProblemSetup setup = dense_setup(24, 0.8, 30.0);
    std::mt19937_64 rng(11);
    const post::GaussianPosterior p = post::posterior(setup, random_vector(rng, 24));

    // tau^2 C0 - C is positive semidefinite.
    Matrix gap(24);
    for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = 0; j < 24; ++j)
            gap(i, j) = -p.covariance(i, j);
    for (std::size_t k = 0; k < 24; ++k)
        gap(k, k) += setup.tau * setup.tau * setup.c0.values()[k];
    CHECK(min_eigenvalue(gap) >= -1e-10);
}

TEST_CASE("precision dominates the regularization part") {
    // B - lambda C0^{-1} = A^{-1} C1^{-1} A^{-1} is positive semidefinite.
    const ProblemSetup setup = dense_setup(32, 0.5, 60.0);
    Matrix gap = post::assemble_precision(setup).matrix();
    for (std::size_t k = 0; k < 32; ++k)
        gap(k, k) -= setup.lambda / setup.c0.values()[k];
    const double scale = gap.max_abs();
    CHECK(min_eigenvalue(gap) >= -1e-10 * scale);
}

TEST_CASE("covariance-precision identity holds at construction") {
    const ProblemSetup setup = dense_setup(48, 0.6, 75.0);
    std::mt19937_64 rng(13);
    const post::GaussianPosterior p = post::posterior(setup, random_vector(rng, 48));
    const Matrix prod = bip::dense::matmul(p.covariance, p.precision.matrix());
    double dev = 0.0;
    for (std::size_t i = 0; i < 48; ++i)
        for (std::size_t j = 0; j < 48; ++j) {
            const double target = i == j ? 1.0 : 0.0;
            dev = std::max(dev, std::fabs(setup.n * prod(i, j) - target));
        }
    CHECK(dev < 1e-8);
}

TEST_CASE("negligible forward map returns the prior") {
    // When A^{-1} is numerically zero the data carry no information and the
    // posterior covariance collapses to tau^2 C0.
    ProblemSetup setup = bip::models::build_diagonal(8, 1.0, 0.5, 0.0, 0.9, 3.0);
    setup.a_inv = OperatorRep::diagonal(std::vector<double>(8, 1e-12), true);
    std::mt19937_64 rng(17);
    const post::GaussianPosterior p = post::posterior(setup, random_vector(rng, 8));
    const double tau_sq = setup.tau * setup.tau;
    for (std::size_t k = 0; k < 8; ++k) {
        const double prior_var = tau_sq * setup.c0.values()[k];
        CHECK(std::fabs(p.covariance(k, k) - prior_var) <= 1e-8 * prior_var);
    }
    for (double mk : p.mean) CHECK(std::fabs(mk) < 1e-8);
}

TEST_CASE("likelihood potential closed forms") {
    SUBCASE("zero parameter") {
        const ProblemSetup setup = dense_setup(8, 1.0, 5.0);
        std::mt19937_64 rng(19);
        CHECK(post::likelihood_potential(setup, CoefVector(8, 0.0),
                                         random_vector(rng, 8)) == 0.0);
    }
    SUBCASE("scalar unit problem at n = 2") {
        // Phi(1, 1) = (n/2) - n = -1.
        const ProblemSetup setup = scalar_setup(1.0, 2.0);
        CHECK(post::likelihood_potential(setup, {1.0}, {1.0}) ==
              doctest::Approx(-1.0).epsilon(1e-14));
    }
}

TEST_CASE("objective minus potential minus prior term is constant in u") {
    const ProblemSetup setup = dense_setup(16, 0.7, 12.0);
    std::mt19937_64 rng(23);
    const CoefVector y = random_vector(rng, 16);

    // The gap should equal (n/2) ||C1^{-1/2} y||^2 regardless of u.
    const OperatorRep white = bip::spectral::fractional_power(setup.c1, -0.5);
    const CoefVector wy = bip::spectral::apply_operator(white, y);
    double wy_sq = 0.0;
    for (double v : wy) wy_sq += v * v;
    const double expect = 0.5 * setup.n * wy_sq;

    for (int trial = 0; trial < 50; ++trial) {
        const CoefVector u = random_vector(rng, 16, trial % 2 ? 0.1 : 3.0);
        const double prior = bip::spectral::scale_norm(u, 1.0, setup.c0);
        const double gap = post::tikhonov_objective(setup, y, u) -
                           post::likelihood_potential(setup, u, y) -
                           0.5 * prior * prior / (setup.tau * setup.tau);
        CHECK(gap == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("posterior mean minimizes the regularized objective") {
    std::mt19937_64 rng(29);

    const auto check_minimizer = [&](const ProblemSetup& setup) {
        const CoefVector y = random_vector(rng, setup.size());
        const CoefVector m = post::posterior_mean(setup, y);
        const double at_mean = post::tikhonov_objective(setup, y, m);
        for (int trial = 0; trial < 100; ++trial) {
            const CoefVector v = random_unit(rng, setup.size());
            for (double t : {1e-3, -1e-3}) {
                CoefVector u = m;
                for (std::size_t k = 0; k < u.size(); ++k) u[k] += t * v[k];
                CHECK(post::tikhonov_objective(setup, y, u) >=
                      at_mean - 1e-12 * std::fabs(at_mean));
            }
        }
    };

    SUBCASE("diagonal") {
        check_minimizer(bip::models::build_diagonal(12, 1.0, 0.5, 0.5, 0.4, 40.0));
    }
    SUBCASE("dense") { check_minimizer(dense_setup(12, 0.6, 25.0)); }
}

TEST_CASE("hellinger distance between shared-covariance gaussians") {
    const ProblemSetup setup = scalar_setup(1.0, 1.0);

    SUBCASE("identical posteriors are at distance zero") {
        const post::GaussianPosterior p = post::posterior(setup, {1.0});
        CHECK(post::hellinger_distance(p, p) == 0.0);
    }

    SUBCASE("unit-variance scalar pair two apart") {
        // C = 1, m1 - m2 = 2: sqrt(1 - exp(-1/2)) = 0.62728...
        post::GaussianPosterior p1 = post::posterior(setup, {1.0});
        post::GaussianPosterior p2 = p1;
        p1.covariance(0, 0) = 1.0;
        p2.covariance(0, 0) = 1.0;
        p1.mean = {1.0};
        p2.mean = {-1.0};
        const double d = post::hellinger_distance(p1, p2);
        CHECK(d == doctest::Approx(std::sqrt(1.0 - std::exp(-0.5))).epsilon(1e-12));
        CHECK(d == doctest::Approx(0.6273).epsilon(1e-4));

        // Independent oracle: H^2 = 1 - integral of sqrt(p1 p2) over R,
        // computed by trapezoid quadrature of the two unit-variance
        // densities.
        const double h = 2e-4;
        double affinity = 0.0;
        for (double x = -14.0; x <= 14.0; x += h) {
            const double q1 = std::exp(-0.5 * (x - 1.0) * (x - 1.0));
            const double q2 = std::exp(-0.5 * (x + 1.0) * (x + 1.0));
            affinity += std::sqrt(q1 * q2) * h;
        }
        affinity /= std::sqrt(2.0 * M_PI);
        CHECK(d == doctest::Approx(std::sqrt(1.0 - affinity)).epsilon(1e-7));
    }

    SUBCASE("mismatched covariances are rejected") {
        const post::GaussianPosterior p1 = post::posterior(setup, {1.0});
        post::GaussianPosterior p2 = p1;
        p2.covariance(0, 0) *= 1.001;
        CHECK_THROWS_AS((void)post::hellinger_distance(p1, p2), std::invalid_argument);
    }
}

TEST_CASE("hellinger distance is lipschitz in the data") {
    // Same-setup posteriors share a covariance exactly, so distances reduce
    // to mean differences; the ratio against the data gap must stay bounded.
    const ProblemSetup setup = bip::models::build_diagonal(12, 1.0, 0.5, 0.5, 0.5, 80.0);
    std::mt19937_64 rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const CoefVector y1 = random_vector(rng, 12);
        const CoefVector y2 = random_vector(rng, 12);
        const post::GaussianPosterior p1 = post::posterior(setup, y1);
        const post::GaussianPosterior p2 = post::posterior(setup, y2);
        const double d = post::hellinger_distance(p1, p2);
        CoefVector diff(12);
        for (std::size_t k = 0; k < 12; ++k) diff[k] = y1[k] - y2[k];
        const double gap =
            bip::spectral::scale_norm(diff, setup.params.beta - 0.75, setup.c0);
        REQUIRE(gap > 0.0);
        worst = std::max(worst, d / gap);
    }
    CHECK(worst < 1e4);
    CHECK(std::isfinite(worst));
}

TEST_CASE("length mismatches are rejected") {
    const ProblemSetup setup = bip::models::build_diagonal(4, 1.0, 0.5, 0.0, 1.0, 1.0);
    const CoefVector bad(3, 1.0);
    CHECK_THROWS_AS((void)post::posterior_mean(setup, bad), std::invalid_argument);
    CHECK_THROWS_AS((void)post::posterior(setup, bad), std::invalid_argument);
    CHECK_THROWS_AS((void)post::likelihood_potential(setup, bad, bad),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)post::tikhonov_objective(setup, bad, bad),
                    std::invalid_argument);
}
