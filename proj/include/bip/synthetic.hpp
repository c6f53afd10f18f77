#pragma once

#include <cstdint>

#include "bip/models.hpp"
#include "bip/spectral.hpp"

namespace bip::synthetic {

struct RngSeed {
    std::uint64_t value = 0;
};

// Streams are domain-separated so that prior draws, noise draws, and any
// future consumers never overlap even under the same seed.
enum class Purpose : std::uint64_t { prior = 1, noise = 2 };

// Splittable counter-based generator: the state is a hash of
// (seed, purpose, replicate), so replicate r of a Monte Carlo run produces
// the same values no matter which worker evaluates it or in what order.
// SplitMix64 steps underneath, Gaussians by the polar method with the
// usual cached spare.
class RandomStream {
public:
    RandomStream(RngSeed seed, Purpose purpose, std::uint64_t replicate);

    std::uint64_t next_u64();
    double uniform();   // [0, 1)
    double gaussian();  // standard normal

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Deterministic truth at the boundary of its smoothness class: coefficients
// amplitude * lambda_k^gamma * k^(-1/2 - margin_delta), which keeps the
// gamma-norm summable (exponent -1 - 2 margin) while any extra smoothness
// order diverges. margin_delta controls how close to the boundary it sits.
struct TruthSpec {
    double gamma = 1.0;
    double margin_delta = 0.1;
    double amplitude = 1.0;
};

spectral::CoefVector make_truth(const TruthSpec& spec,
                                const models::ProblemSetup& setup);

// Draw from the prior N(0, tau^2 C0): coordinates tau * lambda_k * zeta_k.
spectral::CoefVector sample_prior(const models::ProblemSetup& setup,
                                  RandomStream& rng);
spectral::CoefVector sample_prior(const models::ProblemSetup& setup, RngSeed seed,
                                  std::uint64_t replicate = 0);

// Draws from N(0, C1), applying a cached square root of the noise
// covariance. Construct once per setup when sampling in a loop; the
// one-shot sample_noise wrappers rebuild the root every call.
class NoiseSampler {
public:
    explicit NoiseSampler(const models::ProblemSetup& setup);
    spectral::CoefVector draw(RandomStream& rng) const;

private:
    spectral::OperatorRep root_;
};

spectral::CoefVector sample_noise(const models::ProblemSetup& setup,
                                  RandomStream& rng);
spectral::CoefVector sample_noise(const models::ProblemSetup& setup, RngSeed seed,
                                  std::uint64_t replicate = 0);

// Observation y = A^{-1} u_truth + n^{-1/2} xi. The seed-based overload
// consumes the same stream as sample_noise, so the two agree draw for draw.
spectral::CoefVector generate_data(const models::ProblemSetup& setup,
                                   const spectral::CoefVector& u_truth,
                                   RandomStream& rng);
spectral::CoefVector generate_data(const models::ProblemSetup& setup,
                                   const spectral::CoefVector& u_truth, RngSeed seed,
                                   std::uint64_t replicate = 0);

}  // namespace bip::synthetic
