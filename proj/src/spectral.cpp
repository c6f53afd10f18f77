#include "bip/spectral.hpp"

#include <cmath>

#include "bip/kernels.hpp"
#include "bip/logging.hpp"

namespace bip::spectral {

std::string basis_name(Basis b) {
    switch (b) {
        case Basis::dirichlet_sine: return "dirichlet-sine";
        case Basis::abstract_power: return "abstract-power";
    }
    return "unknown";
}

Spectrum make_spectrum(std::vector<double> rho_sq, Basis basis) {
    for (std::size_t k = 0; k < rho_sq.size(); ++k) {
        if (!(rho_sq[k] > 0.0) || !std::isfinite(rho_sq[k]))
            throw std::invalid_argument("spectrum entries must be positive");
        if (k > 0 && rho_sq[k] < rho_sq[k - 1])
            throw std::invalid_argument("spectrum must be non-decreasing");
    }
    return Spectrum{std::move(rho_sq), basis};
}

ScaleParams make_scale_params(double ell, double beta, double s0) {
    if (!(ell >= 0.0) || !(beta >= 0.0))
        throw std::invalid_argument("ell and beta must be nonnegative");
    if (!(s0 >= 0.0) || !(s0 < 1.0))
        throw std::invalid_argument("s0 must lie in [0, 1)");
    ScaleParams p;
    p.ell = ell;
    p.beta = beta;
    p.s0 = s0;
    p.delta = 2.0 * ell - beta + 1.0;
    if (p.delta <= 2.0 * s0)
        logging::warn("scale gap delta = " + std::to_string(p.delta) +
                      " does not exceed 2*s0 = " + std::to_string(2.0 * s0) +
                      "; rates degenerate in this regime");
    return p;
}

OperatorRep OperatorRep::diagonal(std::vector<double> values, bool spd) {
    for (double v : values) {
        if (!std::isfinite(v))
            throw std::invalid_argument("diagonal operator entries must be finite");
        if (spd && !(v > 0.0))
            throw std::invalid_argument("spd diagonal operator needs positive entries");
    }
    OperatorRep op;
    op.kind_ = OpKind::diagonal;
    op.spd_ = spd;
    op.values_ = std::move(values);
    return op;
}

OperatorRep OperatorRep::dense_symmetric(dense::Matrix m, bool spd) {
    const double scale = std::max(m.max_abs(), 1e-300);
    const double asym = dense::max_asymmetry(m) / scale;
    if (asym > 1e-10)
        logging::warn("dense operator asymmetry " + std::to_string(asym) +
                      " exceeds 1e-10 relative; symmetrizing");
    dense::symmetrize(m);
    OperatorRep op;
    op.kind_ = OpKind::dense;
    op.spd_ = spd;
    op.matrix_ = std::move(m);
    return op;
}

OperatorRep OperatorRep::identity(std::size_t n) {
    return diagonal(std::vector<double>(n, 1.0), true);
}

std::size_t OperatorRep::size() const {
    return kind_ == OpKind::diagonal ? values_.size() : matrix_.size();
}

const std::vector<double>& OperatorRep::values() const {
    if (kind_ != OpKind::diagonal)
        throw std::logic_error("operator is not diagonal");
    return values_;
}

const dense::Matrix& OperatorRep::matrix() const {
    if (kind_ != OpKind::dense)
        throw std::logic_error("operator is not dense");
    return matrix_;
}

dense::Matrix OperatorRep::to_matrix() const {
    return kind_ == OpKind::dense ? matrix_ : dense::Matrix::diagonal(values_);
}

double scale_norm(const CoefVector& u, double t, const OperatorRep& c0) {
    if (c0.kind() != OpKind::diagonal || !c0.spd())
        throw std::invalid_argument("scale_norm needs a diagonal SPD covariance");
    const std::vector<double>& lam_sq = c0.values();
    if (u.size() != lam_sq.size())
        throw std::invalid_argument("scale_norm size mismatch");

    if (t == 0.0)
        return std::sqrt(kernels::dot(u.data(), u.data(), u.size()));

    std::vector<double> w(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) w[k] = std::pow(lam_sq[k], -t);
    const double s = kernels::wsumsq(w.data(), u.data(), u.size());
    if (!std::isfinite(s)) throw OverflowError(t);
    return std::sqrt(s);
}

CoefVector apply_operator(const OperatorRep& op, const CoefVector& u) {
    if (u.size() != op.size())
        throw std::invalid_argument("apply_operator size mismatch");
    if (op.kind() == OpKind::diagonal) {
        CoefVector out(u.size());
        kernels::mul(op.values().data(), u.data(), out.data(), u.size());
        return out;
    }
    return dense::matvec(op.matrix(), u);
}

CoefVector solve_spd(const OperatorRep& op, const CoefVector& r) {
    if (!op.spd())
        throw std::invalid_argument("solve_spd requires an operator flagged spd");
    if (r.size() != op.size())
        throw std::invalid_argument("solve_spd size mismatch");

    if (op.kind() == OpKind::diagonal) {
        CoefVector w(r.size());
        const std::vector<double>& d = op.values();
        for (std::size_t k = 0; k < r.size(); ++k) w[k] = r[k] / d[k];
        return w;
    }

    const dense::Matrix& a = op.matrix();
    const auto ch = dense::Cholesky::factor(a);
    CoefVector w = ch.solve(r);

    const double rnorm = std::sqrt(kernels::dot(r.data(), r.data(), r.size()));
    auto residual = [&](const CoefVector& x) {
        CoefVector ax = dense::matvec(a, x);
        kernels::axpy(-1.0, r.data(), ax.data(), ax.size());
        return std::sqrt(kernels::dot(ax.data(), ax.data(), ax.size()));
    };

    if (rnorm > 0.0 && residual(w) > 1e-11 * rnorm) {
        // One refinement pass recovers a small residual even when the
        // system is poorly conditioned.
        CoefVector ax = dense::matvec(a, w);
        CoefVector res(r.size());
        for (std::size_t k = 0; k < r.size(); ++k) res[k] = r[k] - ax[k];
        CoefVector corr = ch.solve(res);
        kernels::axpy(1.0, corr.data(), w.data(), w.size());
        if (residual(w) > 1e-10 * rnorm)
            throw std::runtime_error("solve_spd residual exceeds tolerance");
    }
    return w;
}

OperatorRep fractional_power(const OperatorRep& op, double p) {
    if (!op.spd())
        throw std::invalid_argument("fractional_power requires an spd operator");

    if (op.kind() == OpKind::diagonal) {
        std::vector<double> out(op.size());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = std::pow(op.values()[k], p);
        return OperatorRep::diagonal(std::move(out), true);
    }

    if (p == 0.0)
        return OperatorRep::dense_symmetric(dense::Matrix::identity(op.size()), true);

    dense::SymEigen eig = dense::sym_eigen(op.matrix());
    for (std::size_t k = 0; k < eig.values.size(); ++k)
        if (!(eig.values[k] > 0.0)) throw dense::SpdError(k);

    std::vector<double> powered(eig.values.size());
    for (std::size_t k = 0; k < powered.size(); ++k)
        powered[k] = std::pow(eig.values[k], p);

    dense::Matrix vd = eig.vectors;
    dense::scale_cols(vd, powered);
    dense::Matrix result = dense::matmul(vd, dense::transpose(eig.vectors));
    return OperatorRep::dense_symmetric(std::move(result), true);
}

}  // namespace bip::spectral
