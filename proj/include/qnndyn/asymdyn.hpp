#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qnndyn/linalg.hpp"
#include "qnndyn/model.hpp"
#include "qnndyn/rng.hpp"

namespace qnndyn {

// γ U diag(+1,...,+1,-1,...,-1) U† with Haar U: a random measurement with
// spectrum ±γ, half of each sign.
Matrix init_asym_measurement(int d, double gamma, RngStream& rng);

// Right-hand side of the large-depth measurement flow,
//   dM/dt = Σ_j r_j [M, [M, ρ_j]],   r_j = y_j - tr(M ρ_j),
// for a measurement that already carries its scale. The flow is isospectral
// and drives the square loss downhill.
Matrix asym_flow_rhs(const Matrix& m_scaled, const TrainingSet& dataset);

struct AsymState {
    double time = 0.0;
    Matrix measurement;
    RealVector residuals;
};

struct AsymOptions {
    double step = 1e-3;  // callers typically scale this by 1/γ²
    double t_end = 1.0;
    int log_every = 10;              // in steps
    int spectrum_check_every = 1;    // in steps
    double spectrum_drift_abort = 1e-4;
};

struct AsymTrajectory {
    std::vector<AsymState> states;
    double spectrum_drift_max = 0.0;
    int steps_taken = 0;
};

// Classic fixed-step RK4 on the matrix flow. The eigenvalues of M are
// conserved quantities; their drift is monitored and integration aborts with
// NumericalError if it passes options.spectrum_drift_abort.
AsymTrajectory integrate_asym_flow(const Matrix& m0_scaled, const TrainingSet& dataset,
                                   const AsymOptions& options);

// (time, λ_min of the asymptotic kernel) at every logged state.
std::vector<std::pair<double, double>> lambda_min_series(const AsymTrajectory& traj,
                                                         const TrainingSet& dataset);

// Loss (1/2m) Σ r_j² of a logged state.
double asym_loss(const AsymState& state);

// A draw from the uniform ensemble of interpolating global minima: unit
// directions û_j in the positive eigenspace, canonical labels (+1 first),
// the direction Gram G, the block-constant weight matrix R and the closed-form
// kernel 2γ²(1-1/γ²) I - 8γ² (R∘R) ∘ (G-I) ∘ (Gᵀ-I) at the minimum.
struct GlobalMinimumSample {
    int d = 0;
    int m = 0;
    double gamma = 0.0;
    std::vector<Vector> unit_directions;  // û_j, length d/2
    RealVector labels;
    Matrix gram;          // G_ij = û_i† û_j
    RealMatrix weights;   // R
    RealMatrix k_asym;
    double lambda_min = 0.0;
};

GlobalMinimumSample sample_global_minimum(int d, int m, double gamma, RngStream& rng);

// Explicit states realizing the sampled minimum: u_j padded into the positive
// subspace and w_j completed in the negative subspace so that the v_j are
// orthonormal and γ(‖u_j‖² - ‖w_j‖²) = y_j exactly. The completion factors the
// Gram I - P of the w vectors through its eigendecomposition.
struct EmbeddedMinimum {
    std::vector<Vector> states;
    Matrix measurement;  // γ · diag(+1..., -1...)
    RealVector predictions;
};

EmbeddedMinimum embed_minimum(const GlobalMinimumSample& sample);

struct LambdaStats {
    double q05 = 0.0;
    double median = 0.0;
    double q95 = 0.0;
    double mean = 0.0;
    double threshold = 0.0;      // (1-ε) · 2γ²(1-1/γ²)
    double fraction_above = 0.0;
    int num_samples = 0;
    std::vector<double> values;  // sorted
};

// Monte-Carlo statistics of λ_min over sampled minima. Sample k uses
// RngStream(seed, stream_base + k), so results are independent of any
// parallel execution order.
LambdaStats minima_lambda_stats(int d, int m, double gamma, int num_samples, double epsilon,
                                std::uint64_t seed, std::uint64_t stream_base = 0);

// ‖A ∘ B‖_op <= ‖A‖_op ‖B‖_op + 1e-10 for Hermitian A, B.
bool hadamard_opnorm_bound_holds(const Matrix& a, const Matrix& b);

}  // namespace qnndyn
