#pragma once

#include <vector>

#include "qnndyn/linalg.hpp"
#include "qnndyn/rng.hpp"

namespace qnndyn {

// Layered circuit U(θ) = U_p e^{-iθ_p H} ··· U_1 e^{-iθ_1 H} U_0 with one
// shared traceless Hermitian generator H and p+1 fixed unitaries.
struct PeriodicAnsatz {
    int dim = 0;
    int num_params = 0;
    Matrix generator;
    std::vector<Matrix> fixed_unitaries;  // U_0 .. U_p

    // cached generator eigendecomposition for cheap layer rotations
    bool generator_diagonal = false;
    RealVector gen_eigvals;
    Matrix gen_eigvecs;
};

struct Measurement {
    Matrix base;         // Hermitian, ±1 spectrum
    double gamma = 1.0;  // prediction scale
};

struct TrainingSet {
    int dim = 0;
    int size = 0;
    std::vector<Vector> states;  // unit-norm pure states
    RealVector labels;           // ±1
};

// Traceless diagonal generator with d/2 entries +sqrt(d - 1/d) and d/2
// entries -sqrt(d - 1/d), so tr(H²) = d² - 1. Requires even d >= 2.
Matrix build_generating_hamiltonian(int d);

// diag(+1 ... +1, -1 ... -1) with d/2 entries of each sign; σ_Z at d = 2.
Matrix build_pauli_like_measurement(int d);

// Assemble and validate an ansatz from explicit parts. Checks that the
// generator is Hermitian and traceless and every fixed unitary is unitary.
PeriodicAnsatz make_ansatz(Matrix generator, std::vector<Matrix> fixed_unitaries);

// Standard construction: generating Hamiltonian plus p+1 Haar unitaries drawn
// from `rng` in index order U_0, U_1, ..., U_p.
PeriodicAnsatz build_periodic_ansatz(int d, int p, RngStream& rng);

// exp(-i θ H) x through the cached generator eigenbasis.
Vector apply_layer_rotation(const PeriodicAnsatz& ansatz, double theta, const Vector& x);

// U(θ) x, applied layer by layer without forming U(θ).
Vector apply_circuit(const PeriodicAnsatz& ansatz, const RealVector& theta, const Vector& x);

// Dense U(θ).
Matrix circuit_unitary(const PeriodicAnsatz& ansatz, const RealVector& theta);

// Heisenberg-picture measurement U(θ)† M U(θ), unscaled.
Matrix parameterized_measurement(const PeriodicAnsatz& ansatz, const RealVector& theta,
                                 const Measurement& meas);

// Conjugated generators H̃_l = U_0† U_{1:l-1}†(θ) H U_{1:l-1}(θ) U_0 for
// l = 1..p. The derivative of the measurement is ∂M/∂θ_l = i [H̃_l, M(θ)].
std::vector<Matrix> conjugated_generators(const PeriodicAnsatz& ansatz, const RealVector& theta);

// γ · <v| m |v>. Requires |v| = 1 within 1e-10.
double predict(const Matrix& m_theta, const Vector& state, double gamma);

// tr(H²) / (d² - 1); equals 1 for the generating Hamiltonian above.
double trace_square_ratio(const Matrix& h);

// m pairwise-orthogonal Haar states (columns of one Haar unitary). With
// `balanced` and even m, labels are a random arrangement of m/2 of each sign;
// otherwise labels are independent uniform ±1.
TrainingSet sample_orthogonal_dataset(int d, int m, RngStream& rng, bool balanced = true);

}  // namespace qnndyn
