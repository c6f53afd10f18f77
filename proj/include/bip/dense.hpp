#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bip::dense {

// Thrown when an SPD factorization hits a nonpositive pivot; `pivot` is the
// zero-based index of the offending diagonal entry.
struct SpdError : std::runtime_error {
    std::size_t pivot;
    explicit SpdError(std::size_t p)
        : std::runtime_error("matrix not positive definite (pivot " +
                             std::to_string(p) + ")"),
          pivot(p) {}
};

// Square row-major matrix. All dense operators in this project are N x N in
// the prior eigenbasis, so rectangular storage is not needed.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

    static Matrix identity(std::size_t n);
    static Matrix diagonal(const std::vector<double>& d);

    std::size_t size() const { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
    double* row(std::size_t i) { return a_.data() + i * n_; }
    const double* row(std::size_t i) const { return a_.data() + i * n_; }
    std::vector<double>& data() { return a_; }
    const std::vector<double>& data() const { return a_; }

    double max_abs() const;
    double frobenius_sq() const;

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

// max |A(i,j) - A(j,i)| over all pairs.
double max_asymmetry(const Matrix& a);
// A <- (A + At)/2.
void symmetrize(Matrix& a);

// Scale rows (diag(w) * A) or columns (A * diag(w)) in place.
void scale_rows(Matrix& a, const std::vector<double>& w);
void scale_cols(Matrix& a, const std::vector<double>& w);

// Lower-triangular Cholesky factorization A = L Lt of an SPD matrix.
class Cholesky {
public:
    static Cholesky factor(const Matrix& a);

    const Matrix& lower() const { return l_; }
    std::vector<double> solve(const std::vector<double>& b) const;
    // Solves A X = R for a full square right-hand side.
    Matrix solve_matrix(const Matrix& r) const;
    // L^{-1}, lower triangular.
    Matrix lower_inverse() const;
    // A^{-1} = L^{-t} L^{-1}.
    Matrix inverse() const;
    // tr(A^{-1}) = squared Frobenius norm of L^{-1}, without forming A^{-1}.
    double trace_inverse() const;
    // Solves L Y = R (forward substitution only), for Frobenius-norm traces.
    Matrix forward_solve_matrix(const Matrix& r) const;

private:
    Matrix l_;
};

// Largest singular value, by power iteration on Mt M from a deterministic
// start vector; converges to relative tolerance `tol` on the squared value.
double spectral_norm(const Matrix& m, double tol = 1e-8, int max_iter = 50000);

// Full symmetric eigendecomposition A = V diag(values) V^t by cyclic Jacobi
// rotations; eigenvalues ascending, eigenvectors in the columns of `vectors`.
struct SymEigen {
    std::vector<double> values;
    Matrix vectors;
};
SymEigen sym_eigen(Matrix a);

}  // namespace bip::dense
