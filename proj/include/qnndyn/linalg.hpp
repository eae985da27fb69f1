#pragma once

#include <Eigen/Dense>

#include <complex>

#include "qnndyn/rng.hpp"

namespace qnndyn {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

bool is_hermitian(const Matrix& a, double tol = 1e-12);

// Throws std::invalid_argument naming `what` if `a` is not square Hermitian
// within `tol` (max absolute entry of a - a†).
void require_hermitian(const Matrix& a, double tol, const char* what);

// ab - ba; dimensions must agree.
Matrix commutator(const Matrix& a, const Matrix& b);

struct HermEig {
    RealVector values;  // ascending
    Matrix vectors;     // columns, matching order
};

// Eigendecomposition of a Hermitian matrix.
HermEig herm_eig(const Matrix& h, double htol = 1e-12);

// exp(-i * angle * h) for Hermitian h, computed through the eigenbasis.
Matrix expm_antiherm(const Matrix& h, double angle);

// Haar-distributed unitary: QR of a complex Ginibre matrix with the R-diagonal
// phase correction. Global phase is not normalized (U(d), not SU(d)).
Matrix haar_unitary(int d, RngStream& rng);

struct OpNormResult {
    double value;
    bool estimated;  // true when the iterative path was used
};

// Spectral norm of a Hermitian matrix. Dimensions up to `direct_dim_limit`
// use a full eigendecomposition; larger ones fall back to power iteration on
// h*h with relative tolerance 1e-6 and are flagged as estimated.
OpNormResult op_norm_info(const Matrix& h, int direct_dim_limit = 1024);
double op_norm(const Matrix& h);

// Kronecker product, row-major block convention:
// (a ⊗ b)[(i1*rows(b)+i2), (j1*cols(b)+j2)] = a(i1,j1) * b(i2,j2).
Matrix kron(const Matrix& a, const Matrix& b);

// Swap operator W on C^d ⊗ C^d: W (x ⊗ y) = y ⊗ x. Satisfies W² = I and
// tr((a ⊗ b) W) = tr(ab).
Matrix swap_matrix(int d);

// Real part of z; throws NumericalError if |Im z| exceeds tol.
double real_checked(Complex z, double tol, const char* what);

}  // namespace qnndyn
