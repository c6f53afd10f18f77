#include "bip/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace bip::synthetic {

namespace {

using spectral::CoefVector;

std::uint64_t splitmix_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

const std::vector<double>& prior_eigenvalues(const models::ProblemSetup& setup) {
    if (setup.c0.kind() != spectral::OpKind::diagonal)
        throw std::invalid_argument("sampling requires a diagonal prior covariance");
    return setup.c0.values();
}

}  // namespace

RandomStream::RandomStream(RngSeed seed, Purpose purpose, std::uint64_t replicate) {
    // Absorb the three indices through full mixing rounds so nearby seeds
    // or consecutive replicates share no state structure.
    state_ = seed.value;
    state_ = splitmix_next(state_) ^ static_cast<std::uint64_t>(purpose);
    state_ = splitmix_next(state_) ^ replicate;
    state_ = splitmix_next(state_);
}

std::uint64_t RandomStream::next_u64() { return splitmix_next(state_); }

double RandomStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

CoefVector make_truth(const TruthSpec& spec, const models::ProblemSetup& setup) {
    if (!(spec.gamma >= 1.0))
        throw std::invalid_argument("make_truth: regularity index must be >= 1");
    if (!(spec.margin_delta > 0.0))
        throw std::invalid_argument("make_truth: boundary margin must be positive");
    if (!std::isfinite(spec.amplitude))
        throw std::invalid_argument("make_truth: amplitude must be finite");
    const std::vector<double>& lam_sq = prior_eigenvalues(setup);
    CoefVector u(setup.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = spec.amplitude * std::pow(lam_sq[k], 0.5 * spec.gamma) *
               std::pow(static_cast<double>(k + 1), -0.5 - spec.margin_delta);
    return u;
}

CoefVector sample_prior(const models::ProblemSetup& setup, RandomStream& rng) {
    const std::vector<double>& lam_sq = prior_eigenvalues(setup);
    CoefVector u(setup.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = setup.tau * std::sqrt(lam_sq[k]) * rng.gaussian();
    return u;
}

CoefVector sample_prior(const models::ProblemSetup& setup, RngSeed seed,
                        std::uint64_t replicate) {
    RandomStream rng(seed, Purpose::prior, replicate);
    return sample_prior(setup, rng);
}

NoiseSampler::NoiseSampler(const models::ProblemSetup& setup)
    : root_(spectral::fractional_power(setup.c1, 0.5)) {}

CoefVector NoiseSampler::draw(RandomStream& rng) const {
    CoefVector z(root_.size());
    for (auto& zk : z) zk = rng.gaussian();
    return spectral::apply_operator(root_, z);
}

CoefVector sample_noise(const models::ProblemSetup& setup, RandomStream& rng) {
    return NoiseSampler(setup).draw(rng);
}

CoefVector sample_noise(const models::ProblemSetup& setup, RngSeed seed,
                        std::uint64_t replicate) {
    RandomStream rng(seed, Purpose::noise, replicate);
    return sample_noise(setup, rng);
}

CoefVector generate_data(const models::ProblemSetup& setup,
                         const CoefVector& u_truth, RandomStream& rng) {
    if (u_truth.size() != setup.size())
        throw std::invalid_argument("generate_data: truth length mismatch");
    CoefVector y = spectral::apply_operator(setup.a_inv, u_truth);
    const CoefVector xi = sample_noise(setup, rng);
    const double scale = 1.0 / std::sqrt(setup.n);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += scale * xi[k];
    return y;
}

CoefVector generate_data(const models::ProblemSetup& setup,
                         const CoefVector& u_truth, RngSeed seed,
                         std::uint64_t replicate) {
    RandomStream rng(seed, Purpose::noise, replicate);
    return generate_data(setup, u_truth, rng);
}

}  // namespace bip::synthetic
