#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "bip/kernels.hpp"

using namespace bip;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(gen);
    return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-300});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

// FMA contraction changes elementwise rounding, so outputs may differ by a
// few ulp of the operand magnitudes even where the result nearly cancels.
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

const std::vector<std::size_t> kLengths = {0,  1,  2,  3,   4,   5,   7,    8,
                                           9,  12, 15, 16,  17,  31,  33,   64,
                                           100, 257, 512, 1000, 1024, 4097};

}  // namespace

TEST_CASE("scalar kernels match elementary definitions") {
    const kernels::Backend& k = kernels::scalar();
    CHECK(std::string(k.name) == "scalar");

    std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> y = {2.0, -1.0, 0.5, 0.0, 3.0};

    CHECK(k.dot(x.data(), y.data(), x.size()) == 16.5);
    CHECK(k.wsumsq(y.data(), x.data(), x.size()) == 2.0 - 4.0 + 4.5 + 0.0 + 75.0);

    std::vector<double> z = y;
    k.axpy(2.0, x.data(), z.data(), x.size());
    CHECK(z == std::vector<double>{4.0, 3.0, 6.5, 8.0, 13.0});

    k.scal(-0.5, z.data(), z.size());
    CHECK(z == std::vector<double>{-2.0, -1.5, -3.25, -4.0, -6.5});

    std::vector<double> w(x.size());
    k.mul(x.data(), y.data(), w.data(), x.size());
    CHECK(w == std::vector<double>{2.0, -2.0, 1.5, 0.0, 15.0});
}

TEST_CASE("plane rotation preserves norms and inverts cleanly") {
    const kernels::Backend& k = kernels::scalar();
    const double angle = 0.7;
    const double c = std::cos(angle);
    const double s = std::sin(angle);

    auto x = random_vector(129, 11);
    auto y = random_vector(129, 12);
    const double before =
        k.dot(x.data(), x.data(), x.size()) + k.dot(y.data(), y.data(), y.size());

    auto xr = x;
    auto yr = y;
    k.rot(xr.data(), yr.data(), c, s, xr.size());
    const double after =
        k.dot(xr.data(), xr.data(), xr.size()) + k.dot(yr.data(), yr.data(), yr.size());
    CHECK(after == doctest::Approx(before).epsilon(1e-14));

    // Rotating back by -angle restores the inputs.
    k.rot(xr.data(), yr.data(), c, -s, xr.size());
    CHECK(max_rel_diff(xr, x) < 1e-14);
    CHECK(max_rel_diff(yr, y) < 1e-14);
}

TEST_CASE("simd backend agrees with scalar reference") {
    const kernels::Backend* v = kernels::avx2();
    if (!v) {
        MESSAGE("avx2 backend unavailable on this host; skipping equivalence");
        return;
    }
    const kernels::Backend& r = kernels::scalar();

    for (std::size_t n : kLengths) {
        CAPTURE(n);
        const auto x = random_vector(n, 100 + n);
        const auto y = random_vector(n, 200 + n);

        if (n > 0) {
            double mass = 0.0;
            for (std::size_t i = 0; i < n; ++i) mass += std::fabs(x[i] * y[i]);

            const double ds = r.dot(x.data(), y.data(), n);
            const double dv = v->dot(x.data(), y.data(), n);
            CHECK(std::fabs(dv - ds) <= 1e-14 * mass);

            const double ws = r.wsumsq(x.data(), y.data(), n);
            const double wv = v->wsumsq(x.data(), y.data(), n);
            CHECK(std::fabs(wv - ws) <= 1e-14 * mass);
        } else {
            CHECK(v->dot(x.data(), y.data(), 0) == 0.0);
            CHECK(v->wsumsq(x.data(), y.data(), 0) == 0.0);
        }

        std::vector<double> as(y), av(y);
        r.axpy(0.37, x.data(), as.data(), n);
        v->axpy(0.37, x.data(), av.data(), n);
        CHECK(max_abs_diff(as, av) < 1e-15);

        std::vector<double> ss(x), sv(x);
        r.scal(-1.7, ss.data(), n);
        v->scal(-1.7, sv.data(), n);
        CHECK(max_rel_diff(ss, sv) == 0.0);

        std::vector<double> ms(n), mv(n);
        r.mul(x.data(), y.data(), ms.data(), n);
        v->mul(x.data(), y.data(), mv.data(), n);
        CHECK(max_rel_diff(ms, mv) == 0.0);

        std::vector<double> rxs(x), rys(y), rxv(x), ryv(y);
        r.rot(rxs.data(), rys.data(), 0.8, 0.6, n);
        v->rot(rxv.data(), ryv.data(), 0.8, 0.6, n);
        CHECK(max_abs_diff(rxs, rxv) < 1e-15);
        CHECK(max_abs_diff(rys, ryv) < 1e-15);
    }
}

TEST_CASE("backend dispatch honors the force hook") {
    const kernels::Backend& initial = kernels::active();
    CHECK((std::string(initial.name) == "scalar" || std::string(initial.name) == "avx2"));

    kernels::force(&kernels::scalar());
    CHECK(std::string(kernels::active().name) == "scalar");

    if (const kernels::Backend* v = kernels::avx2()) {
        kernels::force(v);
        CHECK(std::string(kernels::active().name) == "avx2");
    }

    kernels::force(nullptr);
    CHECK(std::string(kernels::active().name) == std::string(initial.name));
}
