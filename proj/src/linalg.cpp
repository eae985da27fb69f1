#include "qnndyn/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qnndyn/errors.hpp"

namespace qnndyn {

bool is_hermitian(const Matrix& a, double tol) {
    if (a.rows() != a.cols()) return false;
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

void require_hermitian(const Matrix& a, double tol, const char* what) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument(std::string(what) + ": matrix is not square");
    }
    double dev = (a - a.adjoint()).cwiseAbs().maxCoeff();
    if (dev > tol) {
        throw std::invalid_argument(std::string(what) + ": not Hermitian, max |A - A†| = " +
                                    std::to_string(dev));
    }
}

Matrix commutator(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
        throw std::invalid_argument("commutator: operands must be square with equal dimension");
    }
    return a * b - b * a;
}

HermEig herm_eig(const Matrix& h, double htol) {
    require_hermitian(h, htol, "herm_eig");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("herm_eig: eigensolver did not converge");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

Matrix expm_antiherm(const Matrix& h, double angle) {
    HermEig eig = herm_eig(h);
    Vector phases(h.rows());
    for (Eigen::Index k = 0; k < h.rows(); ++k) {
        phases(k) = std::exp(Complex(0.0, -angle * eig.values(k)));
    }
    return eig.vectors * phases.asDiagonal() * eig.vectors.adjoint();
}

Matrix haar_unitary(int d, RngStream& rng) {
    if (d < 1) throw std::invalid_argument("haar_unitary: dimension must be positive");
    Matrix g(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            g(i, j) = rng.complex_normal();
        }
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Fix the phase freedom so Q is Haar rather than QR-convention biased:
    // scale column k by the phase of R(k,k).
    for (int k = 0; k < d; ++k) {
        Complex rkk = r(k, k);
        double mag = std::abs(rkk);
        Complex phase = mag > 0.0 ? rkk / mag : Complex(1.0, 0.0);
        q.col(k) *= phase;
    }
    return q;
}

OpNormResult op_norm_info(const Matrix& h, int direct_dim_limit) {
    require_hermitian(h, 1e-9, "op_norm");
    int n = static_cast<int>(h.rows());
    if (n <= direct_dim_limit) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) {
            throw NumericalError("op_norm: eigensolver did not converge");
        }
        return {solver.eigenvalues().cwiseAbs().maxCoeff(), false};
    }
    // Power iteration on h*h; converges to the largest |eigenvalue| squared.
    Vector x = Vector::Ones(n);
    for (int i = 0; i < n; ++i) x(i) += 1e-3 * (i % 7);  // break symmetry
    x.normalize();
    double est = 0.0;
    for (int it = 0; it < 5000; ++it) {
        Vector y = h * (h * x);
        double norm = y.norm();
        if (norm == 0.0) return {0.0, true};
        double next = std::sqrt(norm);
        y /= norm;
        if (it > 2 && std::abs(next - est) <= 1e-6 * std::max(next, 1e-300)) {
            return {next, true};
        }
        est = next;
        x = y;
    }
    return {est, true};
}

double op_norm(const Matrix& h) { return op_norm_info(h).value; }

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Matrix swap_matrix(int d) {
    if (d < 1) throw std::invalid_argument("swap_matrix: dimension must be positive");
    Matrix w = Matrix::Zero(d * d, d * d);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            w(a * d + b, b * d + a) = 1.0;
        }
    }
    return w;
}

double real_checked(Complex z, double tol, const char* what) {
    if (std::abs(z.imag()) > tol) {
        throw NumericalError(std::string(what) + ": imaginary residue " +
                             std::to_string(z.imag()) + " exceeds tolerance");
    }
    return z.real();
}

}  // namespace qnndyn
