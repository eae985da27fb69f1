#include "qnndyn/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnndyn/errors.hpp"

namespace qnndyn {

namespace {

void require_dataset(const TrainingSet& ds, int dim) {
    if (ds.dim != dim || ds.size < 1 || static_cast<int>(ds.states.size()) != ds.size) {
        throw std::invalid_argument("dataset does not match operator dimension");
    }
}

// i[M, |v><v|] as a dense matrix
Matrix state_commutator(const Matrix& m, const Vector& v) {
    Vector g = m * v;
    Matrix c = g * v.adjoint() - v * g.adjoint();
    return Complex(0.0, 1.0) * c;
}

void check_dim_cap(int d, std::size_t cap, const char* what) {
    std::size_t dd = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
    if (dd > cap) {
        throw ResourceCapError(std::string(what) + ": d² = " + std::to_string(dd) +
                                   " exceeds the pair-moment dimension cap",
                               cap);
    }
}

}  // namespace

RealMatrix tangent_kernel(const PeriodicAnsatz& ansatz, const RealVector& theta,
                          const TrainingSet& dataset, const Measurement& meas) {
    require_dataset(dataset, ansatz.dim);
    const int m = dataset.size, p = ansatz.num_params;
    Matrix mt = parameterized_measurement(ansatz, theta, meas);
    std::vector<Matrix> gens = conjugated_generators(ansatz, theta);
    RealMatrix a(m, p);
    for (int j = 0; j < m; ++j) {
        Matrix c = state_commutator(mt, dataset.states[j]);
        for (int l = 0; l < p; ++l) {
            a(j, l) = real_checked((c * gens[l]).trace(), 1e-9, "tangent_kernel coefficient");
        }
    }
    return (meas.gamma * meas.gamma) * (a * a.transpose());
}

RealMatrix asym_kernel_scaled(const Matrix& m_scaled, const TrainingSet& dataset) {
    require_hermitian(m_scaled, 1e-9, "asym_kernel measurement");
    require_dataset(dataset, static_cast<int>(m_scaled.rows()));
    const int m = dataset.size;
    std::vector<Matrix> c(m);
    for (int j = 0; j < m; ++j) c[j] = state_commutator(m_scaled, dataset.states[j]);
    RealMatrix k(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double val = real_checked((c[i] * c[j]).trace(), 1e-9, "asym_kernel entry");
            k(i, j) = val;
            k(j, i) = val;
        }
    }
    return k;
}

RealMatrix asym_kernel(const Matrix& m_theta, const TrainingSet& dataset, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("asym_kernel: gamma must be positive");
    return (gamma * gamma) * asym_kernel_scaled(m_theta, dataset);
}

RealMatrix asym_kernel_projection(const Matrix& m_theta, const TrainingSet& dataset,
                                  double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("asym_kernel_projection: gamma must be positive");
    require_dataset(dataset, static_cast<int>(m_theta.rows()));
    HermEig eig = herm_eig(m_theta, 1e-9);
    if ((eig.values.cwiseAbs().array() - 1.0).abs().maxCoeff() > 1e-8) {
        throw std::invalid_argument("asym_kernel_projection: measurement spectrum is not ±1");
    }
    const int d = static_cast<int>(m_theta.rows()), m = dataset.size;
    int npos = 0;
    for (int k = 0; k < d; ++k) npos += eig.values(k) > 0.0 ? 1 : 0;
    Matrix epos(d, npos), eneg(d, d - npos);
    int ip = 0, in = 0;
    for (int k = 0; k < d; ++k) {
        if (eig.values(k) > 0.0) {
            epos.col(ip++) = eig.vectors.col(k);
        } else {
            eneg.col(in++) = eig.vectors.col(k);
        }
    }
    Matrix v(d, m);
    for (int j = 0; j < m; ++j) v.col(j) = dataset.states[j];
    Matrix bp = epos.adjoint() * v;  // coordinates of u_j in the + eigenbasis
    Matrix bn = eneg.adjoint() * v;
    Matrix p = bp.adjoint() * bp;  // u Gram
    Matrix n = bn.adjoint() * bn;  // w Gram
    RealMatrix k(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            k(i, j) = 8.0 * gamma * gamma * (p(j, i) * n(i, j)).real();
        }
    }
    return k;
}

Matrix second_moment(const PeriodicAnsatz& ansatz, const RealVector& theta,
                     std::size_t dim_sq_cap) {
    check_dim_cap(ansatz.dim, dim_sq_cap, "second_moment");
    const int d = ansatz.dim;
    double z = trace_square_ratio(ansatz.generator);
    std::vector<Matrix> gens = conjugated_generators(ansatz, theta);
    Matrix y = Matrix::Zero(d * d, d * d);
    for (const Matrix& h : gens) {
        y += kron(h, h);
    }
    y /= static_cast<double>(ansatz.num_params) * z;
    return y;
}

Matrix haar_second_moment(int d) {
    Matrix y = swap_matrix(d);
    y -= Matrix::Identity(d * d, d * d) / static_cast<double>(d);
    return y;
}

RealMatrix pert_kernel(const PeriodicAnsatz& ansatz, const RealVector& theta,
                       const TrainingSet& dataset, double gamma, std::size_t dim_sq_cap) {
    if (gamma <= 0.0) throw std::invalid_argument("pert_kernel: gamma must be positive");
    require_dataset(dataset, ansatz.dim);
    const int d = ansatz.dim, m = dataset.size;
    Matrix delta = second_moment(ansatz, theta, dim_sq_cap) - haar_second_moment(d);

    Measurement unit{build_pauli_like_measurement(d), 1.0};
    Matrix mt = parameterized_measurement(ansatz, theta, unit);
    std::vector<Matrix> c(m);
    for (int j = 0; j < m; ++j) c[j] = state_commutator(mt, dataset.states[j]);

    // For each j contract Δ with C_j over the second tensor factor:
    //   T_j(c,a) = Σ_{b,e} C_j(b,e) Δ(c·d+e, a·d+b),
    // then (K_pert)_ij = γ² Re tr(C_i T_j).
    RealMatrix k(m, m);
    std::vector<Matrix> t(m, Matrix(d, d));
    for (int j = 0; j < m; ++j) {
        Matrix cjt = c[j].transpose();
        for (int cc = 0; cc < d; ++cc) {
            for (int aa = 0; aa < d; ++aa) {
                t[j](cc, aa) = delta.block(cc * d, aa * d, d, d).cwiseProduct(cjt).sum();
            }
        }
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            Complex s = (c[i] * t[j]).trace();
            k(i, j) = gamma * gamma * real_checked(s, 1e-9, "pert_kernel entry");
        }
    }
    return k;
}

EigSummary eig_summary(const RealMatrix& k, double sym_tol) {
    if (k.rows() != k.cols()) throw std::invalid_argument("eig_summary: matrix is not square");
    double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
    if (asym > sym_tol) {
        throw std::invalid_argument("eig_summary: matrix asymmetry " + std::to_string(asym) +
                                    " exceeds tolerance");
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(k, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eig_summary: eigensolver did not converge");
    }
    return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff(), k.trace()};
}

KernelSnapshot kernel_snapshot(const PeriodicAnsatz& ansatz, const RealVector& theta,
                               const TrainingSet& dataset, const Measurement& meas,
                               bool with_pert, std::size_t dim_sq_cap) {
    KernelSnapshot snap;
    snap.k_full = tangent_kernel(ansatz, theta, dataset, meas);
    Measurement unit{meas.base, 1.0};
    Matrix mt = parameterized_measurement(ansatz, theta, unit);
    snap.k_asym = asym_kernel(mt, dataset, meas.gamma);
    snap.lambda_min_asym = eig_summary(snap.k_asym).lambda_min;
    snap.lambda_max_full = eig_summary(snap.k_full).lambda_max;
    if (with_pert) {
        snap.k_pert = pert_kernel(ansatz, theta, dataset, meas.gamma, dim_sq_cap);
        Matrix delta = second_moment(ansatz, theta, dim_sq_cap) - haar_second_moment(ansatz.dim);
        OpNormResult r = op_norm_info(delta);
        snap.delta_op_norm = r.value;
        snap.delta_norm_estimated = r.estimated;
    }
    return snap;
}

}  // namespace qnndyn
