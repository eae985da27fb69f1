#pragma once

#include <vector>

#include "qnndyn/linalg.hpp"
#include "qnndyn/model.hpp"

namespace qnndyn {

struct TrainConfig {
    double learning_rate = 1e-3;
    int max_iters = 1000;
    double early_stop_loss = 0.0;  // 0 disables
    int log_every = 10;
    double gamma = 1.0;
    double divergence_factor = 10.0;  // abort when loss exceeds this times loss(0)
    bool record_theta = false;

    void validate() const;
};

struct KernelSummary {
    double lambda_min_asym = 0.0;
    double lambda_max_full = 0.0;
};

struct TrajectoryStep {
    int iter = 0;
    double time = 0.0;  // iter * learning_rate
    double wall = 0.0;  // seconds since training started
    double loss = 0.0;
    RealVector residuals;
    RealVector predictions;
    double theta_disp_2 = 0.0;
    double theta_disp_inf = 0.0;
    KernelSummary kernel;
    RealVector theta;  // only populated when TrainConfig::record_theta
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    int iters_run = 0;
    bool stopped_early = false;
    int monotone_violations = 0;  // logged-loss increases beyond 1e-12
    RealVector theta_final;
    double loss_final = 0.0;
};

RealVector predictions(const PeriodicAnsatz& ansatz, const RealVector& theta,
                       const TrainingSet& dataset, const Measurement& meas);

// (1/2m) Σ_j (γ<v_j|M(θ)|v_j> - y_j)²
double loss(const PeriodicAnsatz& ansatz, const RealVector& theta, const TrainingSet& dataset,
            const Measurement& meas);

// r_j = y_j - ŷ_j
RealVector residuals(const PeriodicAnsatz& ansatz, const RealVector& theta,
                     const TrainingSet& dataset, const Measurement& meas);

// Analytic gradient; component l is -(γ/m) Σ_j r_j tr(ρ_j · i[H̃_l, M(θ)]).
RealVector grad(const PeriodicAnsatz& ansatz, const RealVector& theta, const TrainingSet& dataset,
                const Measurement& meas);

// Plain gradient descent from θ = 0 with per-step kernel summaries at logged
// iterations. Aborts with NumericalError on NaN/Inf loss or divergence past
// divergence_factor * loss(0).
Trajectory train_gd(const PeriodicAnsatz& ansatz, const TrainingSet& dataset,
                    const Measurement& meas, const TrainConfig& config);

struct SublinearConstants {
    double c0 = 0.0;
    double c1 = 0.0;
};

// c0 = loss0^{-1/2}, c1 = 12 η p ‖H‖²_op. The loss lower bound along training
// is 1 / (c0 + c1 t)² where the time axis matches the η passed here: with the
// gradient-descent learning rate, t counts iterations; with η = 1, t is
// iteration × learning_rate.
SublinearConstants sublinear_bound_constants(const PeriodicAnsatz& ansatz, double eta,
                                             double loss0);

}  // namespace qnndyn
