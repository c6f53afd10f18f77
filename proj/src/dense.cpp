#include "bip/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bip/kernels.hpp"

namespace bip::dense {

namespace {

void require_same_size(const Matrix& a, const Matrix& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("matrix size mismatch");
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
    Matrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : a_) m = std::max(m, std::fabs(v));
    return m;
}

double Matrix::frobenius_sq() const {
    return kernels::dot(a_.data(), a_.data(), a_.size());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_same_size(a, b);
    const std::size_t n = a.size();
    Matrix c(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i);
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) kernels::axpy(aik, b.row(k), ci, n);
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    const std::size_t n = a.size();
    Matrix t(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    const std::size_t n = a.size();
    if (x.size() != n) throw std::invalid_argument("matvec size mismatch");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = kernels::dot(a.row(i), x.data(), n);
    return y;
}

double max_asymmetry(const Matrix& a) {
    const std::size_t n = a.size();
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            m = std::max(m, std::fabs(a(i, j) - a(j, i)));
    return m;
}

void symmetrize(Matrix& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }
}

void scale_rows(Matrix& a, const std::vector<double>& w) {
    const std::size_t n = a.size();
    if (w.size() != n) throw std::invalid_argument("scale_rows size mismatch");
    for (std::size_t i = 0; i < n; ++i) kernels::scal(w[i], a.row(i), n);
}

void scale_cols(Matrix& a, const std::vector<double>& w) {
    const std::size_t n = a.size();
    if (w.size() != n) throw std::invalid_argument("scale_cols size mismatch");
    for (std::size_t i = 0; i < n; ++i) kernels::mul(a.row(i), w.data(), a.row(i), n);
}

Cholesky Cholesky::factor(const Matrix& a) {
    const std::size_t n = a.size();
    Cholesky ch;
    ch.l_ = Matrix(n);
    Matrix& l = ch.l_;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double s = a(i, j) - kernels::dot(l.row(i), l.row(j), j);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s)) throw SpdError(i);
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return ch;
}

std::vector<double> Cholesky::solve(const std::vector<double>& b) const {
    const std::size_t n = l_.size();
    if (b.size() != n) throw std::invalid_argument("solve size mismatch");
    std::vector<double> x(b);
    // Forward: L y = b, prefix dots against rows of L.
    for (std::size_t i = 0; i < n; ++i)
        x[i] = (x[i] - kernels::dot(l_.row(i), x.data(), i)) / l_(i, i);
    // Backward: Lt z = y; eliminating x[k] touches the prefix of row k of L,
    // which keeps the update contiguous.
    for (std::size_t k = n; k-- > 0;) {
        x[k] /= l_(k, k);
        kernels::axpy(-x[k], l_.row(k), x.data(), k);
    }
    return x;
}

Matrix Cholesky::forward_solve_matrix(const Matrix& r) const {
    require_same_size(l_, r);
    const std::size_t n = l_.size();
    Matrix y = r;
    for (std::size_t i = 0; i < n; ++i) {
        double* yi = y.row(i);
        for (std::size_t k = 0; k < i; ++k)
            kernels::axpy(-l_(i, k), y.row(k), yi, n);
        kernels::scal(1.0 / l_(i, i), yi, n);
    }
    return y;
}

Matrix Cholesky::solve_matrix(const Matrix& r) const {
    const std::size_t n = l_.size();
    Matrix x = forward_solve_matrix(r);
    for (std::size_t i = n; i-- > 0;) {
        double* xi = x.row(i);
        for (std::size_t k = i + 1; k < n; ++k)
            kernels::axpy(-l_(k, i), x.row(k), xi, n);
        kernels::scal(1.0 / l_(i, i), xi, n);
    }
    return x;
}

Matrix Cholesky::lower_inverse() const {
    const std::size_t n = l_.size();
    Matrix m(n);
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.begin() + i, 0.0);
        for (std::size_t k = 0; k < i; ++k)
            kernels::axpy(l_(i, k), m.row(k), acc.data(), k + 1);
        const double d = 1.0 / l_(i, i);
        for (std::size_t j = 0; j < i; ++j) m(i, j) = -d * acc[j];
        m(i, i) = d;
    }
    return m;
}

Matrix Cholesky::inverse() const {
    const Matrix li = lower_inverse();
    return matmul(transpose(li), li);
}

double Cholesky::trace_inverse() const {
    return lower_inverse().frobenius_sq();
}

double spectral_norm(const Matrix& m, double tol, int max_iter) {
    const std::size_t n = m.size();
    if (n == 0) return 0.0;
    const Matrix s = matmul(transpose(m), m);

    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = 1.0 + 0.001 * static_cast<double>(i % 17);
    const double z0 = std::sqrt(kernels::dot(z.data(), z.data(), n));
    kernels::scal(1.0 / z0, z.data(), n);

    double est = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> w = matvec(s, z);
        const double nm = std::sqrt(kernels::dot(w.data(), w.data(), n));
        if (nm == 0.0) return 0.0;
        kernels::scal(1.0 / nm, w.data(), n);
        z.swap(w);
        if (it > 0 && std::fabs(nm - est) <= tol * nm) return std::sqrt(nm);
        est = nm;
    }
    throw std::runtime_error("power iteration failed to converge");
}

SymEigen sym_eigen(Matrix a) {
    const std::size_t n = a.size();
    // Eigenvector rows are accumulated in vt (vt = V^t) so Jacobi rotations
    // act on contiguous row pairs.
    Matrix vt = Matrix::identity(n);

    auto off_diag_sq = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return s;
    };

    const double scale = std::max(a.frobenius_sq(), 1e-300);
    const double tol_sq = scale * 1e-30;
    const int max_sweeps = 64;
    int sweep = 0;
    while (off_diag_sq() > tol_sq) {
        if (++sweep > max_sweeps)
            throw std::runtime_error("symmetric eigensolver failed to converge");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t =
                    (theta >= 0.0 ? 1.0 : -1.0) /
                    (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // Rows p and q of A (contiguous), then columns p and q.
                kernels::rot(a.row(p), a.row(q), c, s, n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                kernels::rot(vt.row(p), vt.row(q), c, s, n);
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    SymEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = vt(order[k], i);
    }
    return out;
}

}  // namespace bip::dense
