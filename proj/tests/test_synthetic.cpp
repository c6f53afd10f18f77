#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "bip/models.hpp"
#include "bip/spectral.hpp"
#include "bip/synthetic.hpp"

using bip::models::ProblemSetup;
using bip::spectral::CoefVector;
using bip::spectral::OperatorRep;
using bip::synthetic::NoiseSampler;
using bip::synthetic::Purpose;
using bip::synthetic::RandomStream;
using bip::synthetic::RngSeed;
using bip::synthetic::TruthSpec;

namespace {

// alpha = 1 diagonal model with ell = beta = 1/2: prior eigenvalues k^-2,
// noise eigenvalues k^-1, trace threshold s0 = 1/2.
ProblemSetup ramp_setup(std::size_t n_trunc, double tau = 1.0, double n = 1.0) {
    return bip::models::build_diagonal(n_trunc, 1.0, 0.5, 0.5, tau, n);
}

// Squared scale norm of the first n_trunc coordinates, so one long draw can
// be measured at several truncation levels.
double truncated_norm_sq(const CoefVector& u, const ProblemSetup& setup,
                         double t, std::size_t n_trunc) {
    const CoefVector head(u.begin(), u.begin() + n_trunc);
    const std::vector<double> c0_head(setup.c0.values().begin(),
                                      setup.c0.values().begin() + n_trunc);
    const double nrm = bip::spectral::scale_norm(
        head, t, OperatorRep::diagonal(c0_head, true));
    return nrm * nrm;
}

double partial_sum(std::size_t n, double p) {
    double s = 0.0;
    for (std::size_t k = 1; k <= n; ++k) s += std::pow(static_cast<double>(k), p);
    return s;
}

}  // namespace

TEST_CASE("streams are reproducible and domain-separated") {
    RandomStream a({42}, Purpose::noise, 7);
    RandomStream b({42}, Purpose::noise, 7);
    for (int i = 0; i < 20; ++i) CHECK(a.next_u64() == b.next_u64());

    RandomStream base({42}, Purpose::noise, 7);
    RandomStream other_replicate({42}, Purpose::noise, 8);
    RandomStream other_purpose({42}, Purpose::prior, 7);
    RandomStream other_seed({43}, Purpose::noise, 7);
    bool rep_differs = false, purpose_differs = false, seed_differs = false;
    for (int i = 0; i < 8; ++i) {
        const std::uint64_t x = base.next_u64();
        rep_differs |= x != other_replicate.next_u64();
        purpose_differs |= x != other_purpose.next_u64();
        seed_differs |= x != other_seed.next_u64();
    }
    CHECK(rep_differs);
    CHECK(purpose_differs);
    CHECK(seed_differs);
}

TEST_CASE("uniform and gaussian draws have the right law") {
    RandomStream rng({2026}, Purpose::prior, 0);
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }

    const int m = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < m; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / m;
    const double var = sum_sq / m - mean * mean;
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(double(m)));
    CHECK(std::fabs(var - 1.0) < 3.0 * std::sqrt(2.0 / double(m)));
}

TEST_CASE("truth construction") {
    SUBCASE("single mode is amplitude times the top eigenvalue power") {
        const ProblemSetup setup = ramp_setup(1);
        const CoefVector u = bip::synthetic::make_truth({3.0, 0.1, 2.5}, setup);
        // lambda_1^2 = 1 in the abstract basis, so only amplitude survives.
        CHECK(u[0] == doctest::Approx(2.5).epsilon(1e-14));

        const ProblemSetup sine = bip::models::build_diagonal(
            1, 1.0, 0.5, 0.5, 1.0, 1.0, bip::spectral::Basis::dirichlet_sine);
        const CoefVector v = bip::synthetic::make_truth({2.0, 0.1, 1.0}, sine);
        CHECK(v[0] == doctest::Approx(1.0 / (M_PI * M_PI)).epsilon(1e-13));
    }

    SUBCASE("invalid parameters are rejected") {
        const ProblemSetup setup = ramp_setup(4);
        CHECK_THROWS_AS((void)bip::synthetic::make_truth({0.5, 0.1, 1.0}, setup),
                        std::invalid_argument);
        CHECK_THROWS_AS((void)bip::synthetic::make_truth({1.0, 0.0, 1.0}, setup),
                        std::invalid_argument);
        CHECK_THROWS_AS((void)bip::synthetic::make_truth({1.0, -0.2, 1.0}, setup),
                        std::invalid_argument);
    }

    SUBCASE("gamma-norm matches its partial sum and converges under refinement") {
        // With margin 0.1 the squared gamma-norm is the partial sum of
        // k^(-1.2); refinement 512 -> 1024 moves the norm by 2.21%.
        const ProblemSetup setup = ramp_setup(1024);
        const CoefVector u = bip::synthetic::make_truth({1.0, 0.1, 1.0}, setup);

        const double sq512 = truncated_norm_sq(u, setup, 1.0, 512);
        const double sq1024 = truncated_norm_sq(u, setup, 1.0, 1024);
        CHECK(sq512 == doctest::Approx(partial_sum(512, -1.2)).epsilon(1e-10));
        CHECK(sq1024 == doctest::Approx(partial_sum(1024, -1.2)).epsilon(1e-10));

        const double change = std::sqrt(sq1024 / sq512) - 1.0;
        CHECK(change > 0.0);
        CHECK(change < 0.025);
    }

    SUBCASE("one order above gamma the partial sums diverge") {
        const ProblemSetup setup = ramp_setup(4096);
        const CoefVector u = bip::synthetic::make_truth({1.0, 0.1, 1.0}, setup);
        // Squared norm at gamma + 1 is the partial sum of k^0.8, which grows
        // 42x from N = 512 to N = 4096.
        const double sq512 = truncated_norm_sq(u, setup, 2.0, 512);
        const double sq4096 = truncated_norm_sq(u, setup, 2.0, 4096);
        CHECK(sq4096 / sq512 > 10.0);
        CHECK(sq4096 / sq512 == doctest::Approx(42.16).epsilon(0.01));
    }
}

TEST_CASE("prior draws match the prior moments") {
    const ProblemSetup setup = ramp_setup(8, 0.7, 5.0);
    const int m = 100000;
    RandomStream rng({11}, Purpose::prior, 0);
    std::vector<double> sum(8, 0.0), sum_sq(8, 0.0);
    for (int i = 0; i < m; ++i) {
        const CoefVector u = bip::synthetic::sample_prior(setup, rng);
        for (std::size_t k = 0; k < 8; ++k) {
            sum[k] += u[k];
            sum_sq[k] += u[k] * u[k];
        }
    }
    for (std::size_t k = 0; k < 8; ++k) {
        const double target = setup.tau * setup.tau * setup.c0.values()[k];
        const double mean = sum[k] / m;
        const double var = sum_sq[k] / m - mean * mean;
        CHECK(std::fabs(mean) < 3.0 * std::sqrt(target / m));
        CHECK(std::fabs(var - target) < 3.0 * target * std::sqrt(2.0 / m));
    }
}

TEST_CASE("prior draws obey the smoothness dichotomy") {
    // Draws live in spaces of order below 1 - s0 = 1/2 and not at 1.1: the
    // squared norm partial sums stabilize at order 0.4 and blow up at 1.1,
    // here averaged over 32 replicates at truncations 512 and 4096.
    const ProblemSetup setup = ramp_setup(4096);
    double stable512 = 0.0, stable4096 = 0.0, rough512 = 0.0, rough4096 = 0.0;
    for (std::uint64_t rep = 0; rep < 32; ++rep) {
        const CoefVector u = bip::synthetic::sample_prior(setup, {99}, rep);
        stable512 += truncated_norm_sq(u, setup, 0.4, 512);
        stable4096 += truncated_norm_sq(u, setup, 0.4, 4096);
        rough512 += truncated_norm_sq(u, setup, 1.1, 512);
        rough4096 += truncated_norm_sq(u, setup, 1.1, 4096);
    }
    CHECK(stable4096 / stable512 < 1.3);   // expected 1.12
    CHECK(rough4096 / rough512 > 5.0);     // expected 12.1
}

TEST_CASE("long prior draws extend short ones coordinate by coordinate") {
    const ProblemSetup coarse = ramp_setup(64);
    const ProblemSetup fine = ramp_setup(256);
    const CoefVector u_coarse = bip::synthetic::sample_prior(coarse, {5}, 3);
    const CoefVector u_fine = bip::synthetic::sample_prior(fine, {5}, 3);
    for (std::size_t k = 0; k < 64; ++k) CHECK(u_coarse[k] == u_fine[k]);
}

TEST_CASE("white noise draws have unit coordinate variances") {
    // r_exp = 0 makes C1 the identity.
    const ProblemSetup setup = bip::models::build_diagonal(8, 1.0, 0.5, 0.0, 1.0, 1.0);
    const NoiseSampler sampler(setup);
    const int m = 100000;
    RandomStream rng({17}, Purpose::noise, 0);
    std::vector<double> sum(8, 0.0), sum_sq(8, 0.0);
    for (int i = 0; i < m; ++i) {
        const CoefVector xi = sampler.draw(rng);
        for (std::size_t k = 0; k < 8; ++k) {
            sum[k] += xi[k];
            sum_sq[k] += xi[k] * xi[k];
        }
    }
    for (std::size_t k = 0; k < 8; ++k) {
        const double mean = sum[k] / m;
        const double var = sum_sq[k] / m - mean * mean;
        CHECK(std::fabs(mean) < 3.0 / std::sqrt(double(m)));
        CHECK(std::fabs(var - 1.0) < 3.0 * std::sqrt(2.0 / double(m)));
    }
}

TEST_CASE("dense noise draws reproduce the full covariance matrix") {
    const ProblemSetup setup = bip::models::build_galerkin_smooth_noise(
        16, bip::models::MultiplierSpec::raised_cosine(1.0, 1),
        bip::models::MultiplierSpec::raised_cosine(0.5, 2), 1.0, 1.0);
    REQUIRE(setup.c1.kind() == bip::spectral::OpKind::dense);

    const NoiseSampler sampler(setup);
    const int m = 100000;
    RandomStream rng({23}, Purpose::noise, 0);
    std::vector<double> sum(16, 0.0);
    bip::dense::Matrix outer(16);
    for (int i = 0; i < m; ++i) {
        const CoefVector xi = sampler.draw(rng);
        for (std::size_t a = 0; a < 16; ++a) {
            sum[a] += xi[a];
            for (std::size_t b = 0; b < 16; ++b) outer(a, b) += xi[a] * xi[b];
        }
    }
    const bip::dense::Matrix& c1 = setup.c1.matrix();
    for (std::size_t a = 0; a < 16; ++a) {
        for (std::size_t b = 0; b < 16; ++b) {
            const double emp = outer(a, b) / m - (sum[a] / m) * (sum[b] / m);
            const double se = std::sqrt(
                (c1(a, a) * c1(b, b) + c1(a, b) * c1(a, b)) / m);
            CHECK(std::fabs(emp - c1(a, b)) < 5.0 * se);
        }
    }
}

TEST_CASE("noise draws obey the smoothness dichotomy") {
    // beta - s0 = 0 in this model: stable one tenth below, divergent one
    // tenth above.
    const ProblemSetup setup = ramp_setup(4096);
    double stable512 = 0.0, stable4096 = 0.0, rough512 = 0.0, rough4096 = 0.0;
    const NoiseSampler sampler(setup);
    for (std::uint64_t rep = 0; rep < 32; ++rep) {
        RandomStream rng({101}, Purpose::noise, rep);
        const CoefVector xi = sampler.draw(rng);
        stable512 += truncated_norm_sq(xi, setup, -0.1, 512);
        stable4096 += truncated_norm_sq(xi, setup, -0.1, 4096);
        rough512 += truncated_norm_sq(xi, setup, 0.1, 512);
        rough4096 += truncated_norm_sq(xi, setup, 0.1, 4096);
    }
    CHECK(stable4096 / stable512 < 1.3);   // expected 1.12
    CHECK(rough4096 / rough512 > 1.4);     // expected 1.69
}

TEST_CASE("observations combine forward image and scaled noise") {
    const ProblemSetup setup = ramp_setup(8, 1.0, 400.0);
    const CoefVector u = bip::synthetic::make_truth({1.0, 0.1, 1.0}, setup);
    const CoefVector forward = bip::spectral::apply_operator(setup.a_inv, u);

    SUBCASE("definition holds draw for draw") {
        const CoefVector y = bip::synthetic::generate_data(setup, u, {7}, 4);
        const CoefVector xi = bip::synthetic::sample_noise(setup, {7}, 4);
        const double scale = 1.0 / std::sqrt(setup.n);
        for (std::size_t k = 0; k < 8; ++k)
            CHECK(y[k] == forward[k] + scale * xi[k]);
    }

    SUBCASE("zero truth gives a pure noise draw") {
        const CoefVector y =
            bip::synthetic::generate_data(setup, CoefVector(8, 0.0), {7}, 4);
        const CoefVector xi = bip::synthetic::sample_noise(setup, {7}, 4);
        const double scale = 1.0 / std::sqrt(setup.n);
        for (std::size_t k = 0; k < 8; ++k) CHECK(y[k] == scale * xi[k]);
    }

    SUBCASE("enormous n recovers the noiseless image") {
        ProblemSetup clean = ramp_setup(8, 1.0, 1e16);
        const CoefVector y = bip::synthetic::generate_data(clean, u, {7}, 4);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < 8; ++k) {
            num = std::max(num, std::fabs(y[k] - forward[k]));
            den = std::max(den, std::fabs(forward[k]));
        }
        CHECK(num / den < 1e-7);
    }

    SUBCASE("sample mean converges to the forward image") {
        const int m = 10000;
        std::vector<double> sum(8, 0.0);
        for (std::uint64_t rep = 0; rep < m; ++rep) {
            const CoefVector y = bip::synthetic::generate_data(setup, u, {31}, rep);
            for (std::size_t k = 0; k < 8; ++k) sum[k] += y[k];
        }
        for (std::size_t k = 0; k < 8; ++k) {
            const double se =
                std::sqrt(setup.c1.values()[k] / setup.n / double(m));
            CHECK(std::fabs(sum[k] / m - forward[k]) < 3.0 * se);
        }
    }

    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(
            (void)bip::synthetic::generate_data(setup, CoefVector(5, 0.0), {7}, 0),
            std::invalid_argument);
    }
}

TEST_CASE("replicate draws do not depend on evaluation order") {
    const ProblemSetup setup = ramp_setup(32, 0.8, 25.0);
    const CoefVector u = bip::synthetic::make_truth({1.5, 0.1, 1.0}, setup);
    std::vector<CoefVector> forward(10), backward(10);
    for (std::uint64_t rep = 0; rep < 10; ++rep)
        forward[rep] = bip::synthetic::generate_data(setup, u, {77}, rep);
    for (std::uint64_t rep = 10; rep-- > 0;)
        backward[rep] = bip::synthetic::generate_data(setup, u, {77}, rep);
    for (std::size_t rep = 0; rep < 10; ++rep)
        for (std::size_t k = 0; k < 32; ++k)
            CHECK(forward[rep][k] == backward[rep][k]);
}
