#include "bip/posterior.hpp"

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bip/kernels.hpp"

namespace bip::posterior {

namespace {

using dense::Cholesky;
using dense::Matrix;
using spectral::CoefVector;
using spectral::OperatorRep;

Cholesky factor_or_report(const Matrix& b) {
    try {
        return Cholesky::factor(b);
    } catch (const dense::SpdError&) {
        const dense::SymEigen eig = dense::sym_eigen(b);
        std::ostringstream msg;
        msg << "precision operator lost positive definiteness; smallest eigenvalue "
            << eig.values.front();
        throw std::runtime_error(msg.str());
    }
}

// S = A^{-1} C0 A^{-1} + lambda C1, the data-space system shared by the
// covariance-form mean and covariance.
Matrix data_space_system(const models::ProblemSetup& setup, const Matrix& w) {
    const Matrix a = setup.a_inv.to_matrix();
    Matrix s = dense::matmul(w, a);
    const Matrix c1 = setup.c1.to_matrix();
    for (std::size_t i = 0; i < setup.size(); ++i)
        for (std::size_t j = 0; j < setup.size(); ++j)
            s(i, j) += setup.lambda * c1(i, j);
    dense::symmetrize(s);
    return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            m = std::max(m, std::fabs(a(i, j) - b(i, j)));
    return m;
}

}  // namespace

Matrix whitened_forward(const models::ProblemSetup& setup) {
    Matrix g = setup.a_inv.to_matrix();
    if (setup.c1.kind() == spectral::OpKind::diagonal) {
        std::vector<double> inv_root(setup.size());
        for (std::size_t k = 0; k < setup.size(); ++k)
            inv_root[k] = 1.0 / std::sqrt(setup.c1.values()[k]);
        dense::scale_rows(g, inv_root);
        return g;
    }
    const Cholesky ch = Cholesky::factor(setup.c1.matrix());
    return ch.forward_solve_matrix(g);
}

OperatorRep assemble_precision(const models::ProblemSetup& setup) {
    const std::size_t n = setup.size();
    const Matrix g = whitened_forward(setup);
    Matrix b = dense::matmul(dense::transpose(g), g);
    for (std::size_t k = 0; k < n; ++k)
        b(k, k) += setup.lambda / setup.c0.values()[k];
    return OperatorRep::dense_symmetric(b, true);
}

CoefVector posterior_mean(const models::ProblemSetup& setup, const CoefVector& y) {
    if (y.size() != setup.size())
        throw std::invalid_argument("posterior_mean: data length mismatch");
    const CoefVector rhs =
        spectral::apply_operator(setup.a_inv, spectral::solve_spd(setup.c1, y));
    return spectral::solve_spd(assemble_precision(setup), rhs);
}

CoefVector posterior_mean_covform(const models::ProblemSetup& setup, const CoefVector& y) {
    if (y.size() != setup.size())
        throw std::invalid_argument("posterior_mean_covform: data length mismatch");
    Matrix w = setup.a_inv.to_matrix();  // A^{-1} C0
    dense::scale_cols(w, setup.c0.values());
    const Cholesky ch = Cholesky::factor(data_space_system(setup, w));
    const CoefVector z = ch.solve(y);
    // m = C0 A^{-1} z = Wt z.
    CoefVector m(setup.size(), 0.0);
    for (std::size_t k = 0; k < setup.size(); ++k)
        kernels::axpy(z[k], w.row(k), m.data(), setup.size());
    return m;
}

OperatorRep posterior_covariance_covform(const models::ProblemSetup& setup) {
    const std::size_t n = setup.size();
    const double tau_sq = setup.tau * setup.tau;
    Matrix w = setup.a_inv.to_matrix();
    dense::scale_cols(w, setup.c0.values());
    const Cholesky ch = Cholesky::factor(data_space_system(setup, w));
    const Matrix x = ch.solve_matrix(w);  // S^{-1} W
    Matrix c = dense::matmul(dense::transpose(w), x);  // Wt S^{-1} W
    kernels::scal(-tau_sq, c.data().data(), n * n);
    for (std::size_t k = 0; k < n; ++k)
        c(k, k) += tau_sq * setup.c0.values()[k];
    dense::symmetrize(c);
    return OperatorRep::dense_symmetric(c, true);
}

GaussianPosterior posterior(const models::ProblemSetup& setup, const CoefVector& y) {
    if (y.size() != setup.size())
        throw std::invalid_argument("posterior: data length mismatch");
    const std::size_t nn = setup.size();
    const OperatorRep b = assemble_precision(setup);
    const Cholesky ch = factor_or_report(b.matrix());

    const CoefVector rhs =
        spectral::apply_operator(setup.a_inv, spectral::solve_spd(setup.c1, y));
    const CoefVector mean = spectral::solve_spd(b, rhs);

    Matrix cov = ch.inverse();
    const double inv_n = 1.0 / setup.n;
    kernels::scal(inv_n, cov.data().data(), nn * nn);
    const double trace_cov = ch.trace_inverse() * inv_n;
    if (!(trace_cov > 0.0))
        throw std::runtime_error("posterior: nonpositive covariance trace");

    if (nn <= 128) {
        // n cov B must reproduce the identity.
        Matrix prod = dense::matmul(cov, b.matrix());
        kernels::scal(setup.n, prod.data().data(), nn * nn);
        const double dev = max_abs_diff(prod, Matrix::identity(nn));
        if (dev > 1e-8)
            throw std::runtime_error("posterior: covariance-precision identity check failed");

        const OperatorRep alt = posterior_covariance_covform(setup);
        const double scale = std::max(cov.max_abs(), alt.matrix().max_abs());
        if (max_abs_diff(cov, alt.matrix()) > 1e-8 * scale)
            throw std::runtime_error("posterior: covariance cross-check failed");
    }

    return GaussianPosterior{mean, b, setup.n, std::move(cov), trace_cov};
}

double likelihood_potential(const models::ProblemSetup& setup,
                            const CoefVector& u, const CoefVector& y) {
    if (u.size() != setup.size() || y.size() != setup.size())
        throw std::invalid_argument("likelihood_potential: length mismatch");
    const OperatorRep white = spectral::fractional_power(setup.c1, -0.5);
    const CoefVector v =
        spectral::apply_operator(white, spectral::apply_operator(setup.a_inv, u));
    const CoefVector z = spectral::apply_operator(white, y);
    const double quad = kernels::dot(v.data(), v.data(), v.size());
    const double cross = kernels::dot(z.data(), v.data(), v.size());
    return 0.5 * setup.n * quad - setup.n * cross;
}

double tikhonov_objective(const models::ProblemSetup& setup,
                          const CoefVector& y, const CoefVector& u) {
    if (u.size() != setup.size() || y.size() != setup.size())
        throw std::invalid_argument("tikhonov_objective: length mismatch");
    const OperatorRep white = spectral::fractional_power(setup.c1, -0.5);
    CoefVector r = spectral::apply_operator(setup.a_inv, u);
    for (std::size_t k = 0; k < r.size(); ++k)
        r[k] = y[k] - r[k];
    const CoefVector wr = spectral::apply_operator(white, r);
    const double misfit = kernels::dot(wr.data(), wr.data(), wr.size());
    const double prior = spectral::scale_norm(u, 1.0, setup.c0);
    return 0.5 * setup.n * misfit + 0.5 * prior * prior / (setup.tau * setup.tau);
}

double hellinger_distance(const GaussianPosterior& p1, const GaussianPosterior& p2) {
    if (p1.mean.size() != p2.mean.size())
        throw std::invalid_argument("hellinger_distance: dimension mismatch");
    const double scale =
        std::max(p1.covariance.max_abs(), p2.covariance.max_abs());
    if (max_abs_diff(p1.covariance, p2.covariance) > 1e-8 * scale)
        throw std::invalid_argument(
            "hellinger_distance: posteriors do not share a covariance");
    CoefVector d(p1.mean.size());
    for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = p1.mean[k] - p2.mean[k];
    const Cholesky ch = Cholesky::factor(p1.covariance);
    const CoefVector w = ch.solve(d);
    const double q = kernels::dot(d.data(), w.data(), d.size());
    return std::sqrt(1.0 - std::exp(-0.125 * q));
}

}  // namespace bip::posterior
