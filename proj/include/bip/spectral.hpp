#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bip/dense.hpp"

namespace bip::spectral {

// Coordinates of a function in the prior eigenbasis, truncated at level N.
using CoefVector = std::vector<double>;

enum class Basis { dirichlet_sine, abstract_power };

std::string basis_name(Basis b);

// Eigenvalues rho_k^2 of the base differential operator, ascending, together
// with the basis they belong to. Everything downstream lives in these
// coordinates.
struct Spectrum {
    std::vector<double> rho_sq;
    Basis basis = Basis::abstract_power;

    std::size_t size() const { return rho_sq.size(); }
};

Spectrum make_spectrum(std::vector<double> rho_sq, Basis basis);

// Smoothing/scale exponents of a model: ell and beta are the orders of the
// forward map and the noise covariance relative to the prior scale, s0 is
// the trace threshold, delta = 2*ell - beta + 1 is the effective
// ill-posedness gap. delta <= 2*s0 is legal but warned about, since rates
// degenerate there.
struct ScaleParams {
    double s0 = 0.0;
    double beta = 0.0;
    double ell = 0.0;
    double delta = 1.0;
};

ScaleParams make_scale_params(double ell, double beta, double s0);

struct OverflowError : std::runtime_error {
    double t;
    explicit OverflowError(double t_)
        : std::runtime_error("scale norm overflowed at t = " + std::to_string(t_)),
          t(t_) {}
};

enum class OpKind { diagonal, dense };

// A self-adjoint operator in prior coordinates: either a diagonal (the
// common case for the covariances) or a dense symmetric matrix (Galerkin
// sections of perturbed operators). Dense input is symmetrized on
// construction; asymmetry beyond 1e-10 relative is logged as a warning.
class OperatorRep {
public:
    OperatorRep() = default;  // empty diagonal placeholder

    static OperatorRep diagonal(std::vector<double> values, bool spd);
    static OperatorRep dense_symmetric(dense::Matrix m, bool spd);
    static OperatorRep identity(std::size_t n);

    OpKind kind() const { return kind_; }
    bool spd() const { return spd_; }
    std::size_t size() const;

    const std::vector<double>& values() const;
    const dense::Matrix& matrix() const;
    dense::Matrix to_matrix() const;

private:
    OpKind kind_ = OpKind::diagonal;
    bool spd_ = false;
    std::vector<double> values_;
    dense::Matrix matrix_;
};

// Norm of the Hilbert scale induced by a diagonal prior covariance c0 with
// entries lambda_k^2: (sum_k (lambda_k^2)^(-t) u_k^2)^(1/2). t = 0 is the
// ambient norm, positive t measures extra smoothness.
double scale_norm(const CoefVector& u, double t, const OperatorRep& c0);

CoefVector apply_operator(const OperatorRep& op, const CoefVector& u);

// Solves op * w = r for an operator flagged SPD, to relative residual
// 1e-10; one step of iterative refinement is applied when plain
// factorization falls short.
CoefVector solve_spd(const OperatorRep& op, const CoefVector& r);

// op^p. Diagonal: elementwise. Dense: full symmetric eigendecomposition.
OperatorRep fractional_power(const OperatorRep& op, double p);

}  // namespace bip::spectral
