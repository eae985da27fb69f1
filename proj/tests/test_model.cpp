#include <doctest.h>

#include <cmath>
#include <set>

#include "qnndyn/errors.hpp"
#include "qnndyn/model.hpp"

using namespace qnndyn;

namespace {

const Complex I1(0.0, 1.0);

PeriodicAnsatz identity_ansatz(int d, int p) {
    std::vector<Matrix> us(p + 1, Matrix::Identity(d, d));
    return make_ansatz(build_generating_hamiltonian(d), std::move(us));
}

}  // namespace

TEST_CASE("generating hamiltonian values and normalization") {
    Matrix h = build_generating_hamiltonian(2);
    double v = std::sqrt(1.5);
    CHECK(std::abs(h(0, 0) - Complex(v, 0)) < 1e-15);
    CHECK(std::abs(h(1, 1) + Complex(v, 0)) < 1e-15);
    CHECK(std::abs(h.trace()) < 1e-12);

    for (int d : {2, 8, 32}) {
        Matrix hd = build_generating_hamiltonian(d);
        CHECK(std::abs((hd * hd).trace().real() - (d * d - 1.0)) < 1e-9);
        CHECK(trace_square_ratio(hd) == doctest::Approx(1.0));
        CHECK(std::abs(hd.trace()) < 1e-12);
    }
    CHECK_THROWS_AS(build_generating_hamiltonian(3), std::invalid_argument);
    CHECK_THROWS_AS(build_generating_hamiltonian(0), std::invalid_argument);
}

TEST_CASE("pauli-like measurement") {
    Matrix m = build_pauli_like_measurement(2);
    CHECK(std::abs(m(0, 0) - Complex(1, 0)) < 1e-15);
    CHECK(std::abs(m(1, 1) + Complex(1, 0)) < 1e-15);
    Matrix m8 = build_pauli_like_measurement(8);
    CHECK((m8 * m8 - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(m8.trace()) < 1e-15);
}

TEST_CASE("ansatz construction validates its parts") {
    RngStream rng(1, 0);
    PeriodicAnsatz a = build_periodic_ansatz(4, 3, rng);
    CHECK(a.dim == 4);
    CHECK(a.num_params == 3);
    CHECK(a.fixed_unitaries.size() == 4);
    CHECK(a.generator_diagonal);

    RngStream rng2(1, 0);
    PeriodicAnsatz b = build_periodic_ansatz(4, 3, rng2);
    for (int l = 0; l <= 3; ++l) {
        CHECK((a.fixed_unitaries[l] - b.fixed_unitaries[l]).cwiseAbs().maxCoeff() == 0.0);
    }

    // traced generator is rejected
    std::vector<Matrix> us(2, Matrix::Identity(2, 2));
    CHECK_THROWS_AS(make_ansatz(Matrix::Identity(2, 2), us), std::invalid_argument);
    // non-unitary fixed matrix is rejected
    std::vector<Matrix> bad = {Matrix::Identity(2, 2), 2.0 * Matrix::Identity(2, 2)};
    CHECK_THROWS_AS(make_ansatz(build_generating_hamiltonian(2), bad), std::invalid_argument);
    CHECK_THROWS_AS(build_periodic_ansatz(4, 0, rng), std::invalid_argument);
}

TEST_CASE("circuit unitary composes layers in order") {
    RngStream rng(5, 0);
    PeriodicAnsatz a = build_periodic_ansatz(4, 2, rng);
    RealVector zero = RealVector::Zero(2);
    Matrix expected = a.fixed_unitaries[2] * a.fixed_unitaries[1] * a.fixed_unitaries[0];
    CHECK((circuit_unitary(a, zero) - expected).cwiseAbs().maxCoeff() < 1e-12);

    RealVector theta(2);
    theta << 0.3, -0.7;
    Matrix u = circuit_unitary(a, theta);
    CHECK((u.adjoint() * u - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

    // vector application agrees with the dense unitary
    Vector x(4);
    x << 0.5, -0.5, Complex(0, 0.5), 0.5;
    CHECK((apply_circuit(a, theta, x) - u * x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(circuit_unitary(a, RealVector::Zero(3)), std::invalid_argument);
}

TEST_CASE("layer rotation handles non-diagonal generators") {
    Matrix sx(2, 2);
    sx << 0, 1, 1, 0;
    std::vector<Matrix> us(3, Matrix::Identity(2, 2));
    PeriodicAnsatz a = make_ansatz(sx, std::move(us));
    CHECK(!a.generator_diagonal);
    Vector x(2);
    x << 1.0, 0.0;
    Vector got = apply_layer_rotation(a, 0.4, x);
    Vector want = expm_antiherm(sx, 0.4) * x;
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("parameterized measurement: identity circuit returns the base") {
    PeriodicAnsatz a = identity_ansatz(4, 2);
    Measurement meas{build_pauli_like_measurement(4), 1.0};
    RealVector zero = RealVector::Zero(2);
    CHECK((parameterized_measurement(a, zero, meas) - meas.base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameterized measurement single-qubit closed form") {
    // H = sqrt(1.5) σ_Z, M0 = σ_X, trivial fixed unitaries:
    // M(θ) = cos(2 sqrt(1.5) θ) σ_X - sin(2 sqrt(1.5) θ) σ_Y
    Matrix sx(2, 2), sy(2, 2);
    sx << 0, 1, 1, 0;
    sy << 0, -I1, I1, 0;
    PeriodicAnsatz a = identity_ansatz(2, 1);
    Measurement meas{sx, 1.0};
    double root = std::sqrt(1.5);
    RealVector theta(1);
    theta << std::numbers::pi / (4.0 * root);
    Matrix m = parameterized_measurement(a, theta, meas);
    CHECK((m + sy).cwiseAbs().maxCoeff() < 1e-12);

    theta << 0.23;
    Matrix m2 = parameterized_measurement(a, theta, meas);
    Matrix want = std::cos(2 * root * 0.23) * sx - std::sin(2 * root * 0.23) * sy;
    CHECK((m2 - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameterized measurement conserves the spectrum") {
    RngStream rng(8, 0);
    PeriodicAnsatz a = build_periodic_ansatz(8, 4, rng);
    Measurement meas{build_pauli_like_measurement(8), 1.0};
    RealVector theta(4);
    theta << 0.4, -1.2, 0.05, 2.2;
    Matrix m = parameterized_measurement(a, theta, meas);
    HermEig eig = herm_eig(m);
    for (int k = 0; k < 8; ++k) {
        CHECK(std::abs(std::abs(eig.values(k)) - 1.0) < 1e-10);
    }
    CHECK(std::abs(m.trace()) < 1e-10);
}

TEST_CASE("conjugated generators") {
    // U_0 = I makes the first conjugated generator H itself
    PeriodicAnsatz a = identity_ansatz(4, 3);
    RealVector theta(3);
    theta << 0.7, -0.3, 1.1;
    std::vector<Matrix> gens = conjugated_generators(a, theta);
    REQUIRE(gens.size() == 3);
    CHECK((gens[0] - a.generator).cwiseAbs().maxCoeff() < 1e-12);

    RngStream rng(3, 0);
    PeriodicAnsatz b = build_periodic_ansatz(4, 3, rng);
    std::vector<Matrix> gb = conjugated_generators(b, theta);
    RealVector href = herm_eig(b.generator).values;
    for (const Matrix& g : gb) {
        CHECK(std::abs(g.trace()) < 1e-10);
        CHECK((herm_eig(g).values - href).cwiseAbs().maxCoeff() < 1e-9);
    }

    // layer l only sees parameters of layers before it, so changing the last
    // parameter leaves every conjugated generator unchanged
    RealVector theta2 = theta;
    theta2(2) = -2.0;
    std::vector<Matrix> gb2 = conjugated_generators(b, theta2);
    for (std::size_t l = 0; l < gb.size(); ++l) {
        CHECK((gb[l] - gb2[l]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("predict") {
    Matrix sz(2, 2);
    sz << 1, 0, 0, -1;
    Vector e0(2), plus(2);
    e0 << 1, 0;
    plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
    CHECK(predict(sz, e0, 1.0) == doctest::Approx(1.0));
    CHECK(predict(sz, e0, 4.0) == doctest::Approx(4.0));
    CHECK(std::abs(predict(sz, plus, 2.0)) < 1e-14);
    Vector bad(2);
    bad << 1.0, 1.0;
    CHECK_THROWS_AS(predict(sz, bad, 1.0), std::invalid_argument);
}

TEST_CASE("prediction magnitude is bounded by gamma") {
    RngStream rng(19, 0);
    PeriodicAnsatz a = build_periodic_ansatz(8, 3, rng);
    Measurement meas{build_pauli_like_measurement(8), 3.5};
    RealVector theta(3);
    theta << 0.2, 0.9, -0.4;
    Matrix m = parameterized_measurement(a, theta, meas);
    TrainingSet ds = sample_orthogonal_dataset(8, 4, rng);
    for (const Vector& v : ds.states) {
        CHECK(std::abs(predict(m, v, meas.gamma)) <= 3.5 + 1e-12);
    }
}

TEST_CASE("orthogonal dataset") {
    RngStream rng(4, 0);
    TrainingSet ds = sample_orthogonal_dataset(32, 4, rng);
    REQUIRE(ds.size == 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            Complex g = ds.states[i].dot(ds.states[j]);
            if (i == j) {
                CHECK(std::abs(g - Complex(1, 0)) < 1e-10);
            } else {
                CHECK(std::abs(g) < 1e-10);
            }
        }
    }
    std::multiset<double> labels(ds.labels.data(), ds.labels.data() + 4);
    CHECK(labels == std::multiset<double>{-1.0, -1.0, 1.0, 1.0});

    RngStream rng2(4, 0);
    TrainingSet ds2 = sample_orthogonal_dataset(32, 4, rng2);
    CHECK((ds.labels - ds2.labels).cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j < 4; ++j) {
        CHECK((ds.states[j] - ds2.states[j]).cwiseAbs().maxCoeff() == 0.0);
    }

    TrainingSet free = sample_orthogonal_dataset(8, 3, rng, false);
    for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(free.labels(j)) == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(sample_orthogonal_dataset(2, 4, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_orthogonal_dataset(8, 3, rng, true), std::invalid_argument);
}
