#include "qnndyn/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "qnndyn/errors.hpp"

namespace qnndyn {

namespace {

void require_even_dim(int d, const char* what) {
    if (d < 2 || d % 2 != 0) {
        throw std::invalid_argument(std::string(what) + ": dimension must be even and >= 2, got " +
                                    std::to_string(d));
    }
}

void require_theta_size(const PeriodicAnsatz& ansatz, const RealVector& theta) {
    if (theta.size() != ansatz.num_params) {
        throw std::invalid_argument("theta length " + std::to_string(theta.size()) +
                                    " does not match parameter count " +
                                    std::to_string(ansatz.num_params));
    }
}

}  // namespace

Matrix build_generating_hamiltonian(int d) {
    require_even_dim(d, "build_generating_hamiltonian");
    double v = std::sqrt(static_cast<double>(d) - 1.0 / d);
    Matrix h = Matrix::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        h(k, k) = (k < d / 2) ? v : -v;
    }
    return h;
}

Matrix build_pauli_like_measurement(int d) {
    require_even_dim(d, "build_pauli_like_measurement");
    Matrix m = Matrix::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        m(k, k) = (k < d / 2) ? 1.0 : -1.0;
    }
    return m;
}

PeriodicAnsatz make_ansatz(Matrix generator, std::vector<Matrix> fixed_unitaries) {
    PeriodicAnsatz a;
    require_hermitian(generator, 1e-10, "make_ansatz generator");
    a.dim = static_cast<int>(generator.rows());
    if (std::abs(generator.trace()) > 1e-10) {
        throw std::invalid_argument("make_ansatz: generator must be traceless");
    }
    if (generator.cwiseAbs().maxCoeff() == 0.0) {
        throw std::invalid_argument("make_ansatz: generator must be non-zero");
    }
    if (fixed_unitaries.size() < 2) {
        throw std::invalid_argument("make_ansatz: need at least U_0 and U_1");
    }
    Matrix id = Matrix::Identity(a.dim, a.dim);
    for (std::size_t l = 0; l < fixed_unitaries.size(); ++l) {
        const Matrix& u = fixed_unitaries[l];
        if (u.rows() != a.dim || u.cols() != a.dim) {
            throw std::invalid_argument("make_ansatz: U_" + std::to_string(l) +
                                        " has wrong dimension");
        }
        if ((u.adjoint() * u - id).cwiseAbs().maxCoeff() > 1e-10) {
            throw std::invalid_argument("make_ansatz: U_" + std::to_string(l) + " is not unitary");
        }
    }
    a.num_params = static_cast<int>(fixed_unitaries.size()) - 1;
    a.generator = std::move(generator);
    a.fixed_unitaries = std::move(fixed_unitaries);

    Matrix offdiag = a.generator;
    offdiag.diagonal().setZero();
    a.generator_diagonal = offdiag.cwiseAbs().maxCoeff() <= 1e-14;
    if (a.generator_diagonal) {
        a.gen_eigvals = a.generator.diagonal().real();
    } else {
        HermEig eig = herm_eig(a.generator);
        a.gen_eigvals = eig.values;
        a.gen_eigvecs = eig.vectors;
    }
    return a;
}

PeriodicAnsatz build_periodic_ansatz(int d, int p, RngStream& rng) {
    if (p < 1) throw std::invalid_argument("build_periodic_ansatz: need p >= 1");
    std::vector<Matrix> us;
    us.reserve(p + 1);
    for (int l = 0; l <= p; ++l) {
        us.push_back(haar_unitary(d, rng));
    }
    return make_ansatz(build_generating_hamiltonian(d), std::move(us));
}

Vector apply_layer_rotation(const PeriodicAnsatz& ansatz, double theta, const Vector& x) {
    const int d = ansatz.dim;
    Vector phases(d);
    for (int k = 0; k < d; ++k) {
        phases(k) = std::exp(Complex(0.0, -theta * ansatz.gen_eigvals(k)));
    }
    if (ansatz.generator_diagonal) {
        return phases.asDiagonal() * x;
    }
    return ansatz.gen_eigvecs * (phases.asDiagonal() * (ansatz.gen_eigvecs.adjoint() * x));
}

Vector apply_circuit(const PeriodicAnsatz& ansatz, const RealVector& theta, const Vector& x) {
    require_theta_size(ansatz, theta);
    Vector y = ansatz.fixed_unitaries[0] * x;
    for (int l = 1; l <= ansatz.num_params; ++l) {
        y = ansatz.fixed_unitaries[l] * apply_layer_rotation(ansatz, theta(l - 1), y);
    }
    return y;
}

Matrix circuit_unitary(const PeriodicAnsatz& ansatz, const RealVector& theta) {
    require_theta_size(ansatz, theta);
    Matrix u = ansatz.fixed_unitaries[0];
    for (int l = 1; l <= ansatz.num_params; ++l) {
        Matrix rot = expm_antiherm(ansatz.generator, theta(l - 1));
        u = ansatz.fixed_unitaries[l] * (rot * u);
    }
    return u;
}

Matrix parameterized_measurement(const PeriodicAnsatz& ansatz, const RealVector& theta,
                                 const Measurement& meas) {
    require_hermitian(meas.base, 1e-12, "parameterized_measurement base");
    if (meas.base.rows() != ansatz.dim) {
        throw std::invalid_argument("parameterized_measurement: base dimension mismatch");
    }
    Matrix u = circuit_unitary(ansatz, theta);
    return u.adjoint() * meas.base * u;
}

std::vector<Matrix> conjugated_generators(const PeriodicAnsatz& ansatz, const RealVector& theta) {
    require_theta_size(ansatz, theta);
    std::vector<Matrix> out;
    out.reserve(ansatz.num_params);
    // w = U_{1:l-1}(θ) U_0 accumulates as l advances
    Matrix w = ansatz.fixed_unitaries[0];
    for (int l = 1; l <= ansatz.num_params; ++l) {
        out.push_back(w.adjoint() * ansatz.generator * w);
        if (l < ansatz.num_params) {
            Matrix rot = expm_antiherm(ansatz.generator, theta(l - 1));
            w = ansatz.fixed_unitaries[l] * (rot * w);
        }
    }
    return out;
}

double predict(const Matrix& m_theta, const Vector& state, double gamma) {
    if (m_theta.rows() != state.size()) {
        throw std::invalid_argument("predict: state dimension mismatch");
    }
    if (std::abs(state.norm() - 1.0) > 1e-10) {
        throw std::invalid_argument("predict: state is not normalized");
    }
    Complex val = state.dot(m_theta * state);  // Eigen dot conjugates the left argument
    return gamma * real_checked(val, 1e-9, "predict");
}

double trace_square_ratio(const Matrix& h) {
    require_hermitian(h, 1e-10, "trace_square_ratio");
    double d = static_cast<double>(h.rows());
    if (h.rows() < 2) throw std::invalid_argument("trace_square_ratio: need dimension >= 2");
    return (h * h).trace().real() / (d * d - 1.0);
}

TrainingSet sample_orthogonal_dataset(int d, int m, RngStream& rng, bool balanced) {
    if (m < 1 || m > d) {
        throw std::invalid_argument("sample_orthogonal_dataset: need 1 <= m <= d");
    }
    if (balanced && m % 2 != 0) {
        throw std::invalid_argument("sample_orthogonal_dataset: balanced labels need even m");
    }
    TrainingSet ds;
    ds.dim = d;
    ds.size = m;
    Matrix u = haar_unitary(d, rng);
    ds.states.reserve(m);
    for (int j = 0; j < m; ++j) {
        ds.states.push_back(u.col(j));
    }
    ds.labels.resize(m);
    if (balanced) {
        std::vector<double> labels(m);
        for (int j = 0; j < m; ++j) labels[j] = (j < m / 2) ? 1.0 : -1.0;
        rng.shuffle(labels);
        for (int j = 0; j < m; ++j) ds.labels(j) = labels[j];
    } else {
        for (int j = 0; j < m; ++j) ds.labels(j) = (rng.next_u64() & 1) ? 1.0 : -1.0;
    }
    return ds;
}

}  // namespace qnndyn
