#include "qnndyn/asymdyn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qnndyn/errors.hpp"
#include "qnndyn/kernels.hpp"

namespace qnndyn {

namespace {

RealVector flow_residuals(const Matrix& m, const TrainingSet& ds) {
    RealVector r(ds.size);
    for (int j = 0; j < ds.size; ++j) {
        Complex yh = ds.states[j].dot(m * ds.states[j]);
        r(j) = ds.labels(j) - real_checked(yh, 1e-9, "asym residual");
    }
    return r;
}

RealVector sorted_eigs(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("integrate_asym_flow: eigensolver did not converge");
    }
    return solver.eigenvalues();  // already ascending
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

Matrix init_asym_measurement(int d, double gamma, RngStream& rng) {
    if (gamma <= 0.0) throw std::invalid_argument("init_asym_measurement: gamma must be positive");
    Matrix u = haar_unitary(d, rng);
    Matrix m0 = build_pauli_like_measurement(d);
    return gamma * (u * m0 * u.adjoint());
}

Matrix asym_flow_rhs(const Matrix& m_scaled, const TrainingSet& dataset) {
    if (dataset.dim != m_scaled.rows()) {
        throw std::invalid_argument("asym_flow_rhs: dataset dimension mismatch");
    }
    const int d = static_cast<int>(m_scaled.rows());
    Matrix rhs = Matrix::Zero(d, d);
    for (int j = 0; j < dataset.size; ++j) {
        const Vector& v = dataset.states[j];
        Vector g = m_scaled * v;
        Complex yh = v.dot(g);
        double r = dataset.labels(j) - real_checked(yh, 1e-9, "asym residual");
        Vector mg = m_scaled * g;
        // r [M, [M, ρ]] = r ((Mg) v† + v (Mg)† - 2 g g†) for ρ = v v†
        rhs.noalias() += r * (mg * v.adjoint());
        rhs.noalias() += r * (v * mg.adjoint());
        rhs.noalias() -= (2.0 * r) * (g * g.adjoint());
    }
    return rhs;
}

AsymTrajectory integrate_asym_flow(const Matrix& m0_scaled, const TrainingSet& dataset,
                                   const AsymOptions& options) {
    require_hermitian(m0_scaled, 1e-10, "integrate_asym_flow initial measurement");
    if (!(options.step > 0.0) || !(options.t_end >= 0.0)) {
        throw std::invalid_argument("integrate_asym_flow: step and t_end must be positive");
    }
    if (options.log_every < 1 || options.spectrum_check_every < 1) {
        throw std::invalid_argument("integrate_asym_flow: logging cadences must be >= 1");
    }

    AsymTrajectory traj;
    Matrix m = m0_scaled;
    RealVector eig0 = sorted_eigs(m);
    double t = 0.0;
    int step_index = 0;

    auto log_state = [&](double time) {
        traj.states.push_back({time, m, flow_residuals(m, dataset)});
    };
    log_state(0.0);

    const int d = static_cast<int>(m.rows());
    Matrix k1(d, d), k2(d, d), k3(d, d), k4(d, d), stage(d, d);
    while (t < options.t_end - 1e-15) {
        double h = std::min(options.step, options.t_end - t);
        k1 = asym_flow_rhs(m, dataset);
        stage = m + (0.5 * h) * k1;
        k2 = asym_flow_rhs(stage, dataset);
        stage = m + (0.5 * h) * k2;
        k3 = asym_flow_rhs(stage, dataset);
        stage = m + h * k3;
        k4 = asym_flow_rhs(stage, dataset);
        m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        ++step_index;

        if (step_index % options.spectrum_check_every == 0) {
            double drift = (sorted_eigs(m) - eig0).cwiseAbs().maxCoeff();
            traj.spectrum_drift_max = std::max(traj.spectrum_drift_max, drift);
            if (drift > options.spectrum_drift_abort) {
                throw NumericalError("integrate_asym_flow: spectrum drift " +
                                     std::to_string(drift) + " at t = " + std::to_string(t));
            }
        }
        bool finished = t >= options.t_end - 1e-15;
        if (step_index % options.log_every == 0 || finished) log_state(t);
    }
    traj.steps_taken = step_index;
    // make sure the final drift is recorded even off the check cadence
    double drift = (sorted_eigs(m) - eig0).cwiseAbs().maxCoeff();
    traj.spectrum_drift_max = std::max(traj.spectrum_drift_max, drift);
    return traj;
}

std::vector<std::pair<double, double>> lambda_min_series(const AsymTrajectory& traj,
                                                         const TrainingSet& dataset) {
    std::vector<std::pair<double, double>> out;
    out.reserve(traj.states.size());
    for (const AsymState& s : traj.states) {
        RealMatrix k = asym_kernel_scaled(s.measurement, dataset);
        out.emplace_back(s.time, eig_summary(k).lambda_min);
    }
    return out;
}

double asym_loss(const AsymState& state) {
    return state.residuals.squaredNorm() / (2.0 * state.residuals.size());
}

GlobalMinimumSample sample_global_minimum(int d, int m, double gamma, RngStream& rng) {
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("sample_global_minimum: d must be even");
    if (m < 2 || m % 2 != 0) throw std::invalid_argument("sample_global_minimum: m must be even");
    if (m > d / 2) throw std::invalid_argument("sample_global_minimum: need m <= d/2");
    if (gamma < 1.0) throw std::invalid_argument("sample_global_minimum: need gamma >= 1");

    GlobalMinimumSample s;
    s.d = d;
    s.m = m;
    s.gamma = gamma;
    s.labels.resize(m);
    for (int j = 0; j < m; ++j) s.labels(j) = j < m / 2 ? 1.0 : -1.0;

    s.unit_directions.reserve(m);
    for (int j = 0; j < m; ++j) {
        Vector u(d / 2);
        for (int k = 0; k < d / 2; ++k) u(k) = rng.complex_normal();
        u.normalize();
        s.unit_directions.push_back(std::move(u));
    }

    s.gram.resize(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            s.gram(i, j) = s.unit_directions[i].dot(s.unit_directions[j]);
        }
    }

    // ‖u_j‖² at the minimum is (1 ± 1/γ)/2 by label; R_ij = √(R_ii R_jj)
    double rp = 0.5 * (1.0 + 1.0 / gamma);
    double rn = 0.5 * (1.0 - 1.0 / gamma);
    s.weights.resize(m, m);
    for (int i = 0; i < m; ++i) {
        double ri = s.labels(i) > 0 ? rp : rn;
        for (int j = 0; j < m; ++j) {
            double rj = s.labels(j) > 0 ? rp : rn;
            s.weights(i, j) = std::sqrt(ri * rj);
        }
    }

    // Off-diagonal entries are -8γ²|u_i†u_j|² with u_j = √R_jj û_j, so the
    // direction overlaps enter against R_ii R_jj = R_ij².
    double g2 = gamma * gamma;
    double diag = 2.0 * g2 * (1.0 - 1.0 / g2);
    s.k_asym.resize(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == j) {
                s.k_asym(i, j) = diag;
            } else {
                double rij = s.weights(i, j);
                s.k_asym(i, j) = -8.0 * g2 * rij * rij * std::norm(s.gram(i, j));
            }
        }
    }
    s.lambda_min = eig_summary(s.k_asym).lambda_min;
    return s;
}

EmbeddedMinimum embed_minimum(const GlobalMinimumSample& sample) {
    const int d = sample.d, m = sample.m, half = sample.d / 2;
    const double gamma = sample.gamma;

    std::vector<Vector> u(m);
    for (int j = 0; j < m; ++j) {
        double rj = 0.5 * (1.0 + (sample.labels(j) > 0 ? 1.0 : -1.0) / gamma);
        u[j] = std::sqrt(rj) * sample.unit_directions[j];
    }
    Matrix p(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) p(i, j) = u[i].dot(u[j]);
    }
    // Orthonormality of the full states forces the w Gram to be I - P.
    Matrix n = Matrix::Identity(m, m) - p;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(n);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("embed_minimum: Gram eigensolver did not converge");
    }
    Matrix f(m, m);
    for (int k = 0; k < m; ++k) {
        double lam = eig.eigenvalues()(k);
        if (lam < -1e-10) {
            throw NumericalError("embed_minimum: w Gram is not positive semidefinite (eig " +
                                 std::to_string(lam) + ")");
        }
        f.row(k) = std::sqrt(std::max(lam, 0.0)) * eig.eigenvectors().col(k).adjoint();
    }

    EmbeddedMinimum out;
    out.states.reserve(m);
    for (int j = 0; j < m; ++j) {
        Vector v = Vector::Zero(d);
        v.head(half) = u[j];
        v.segment(half, m) = f.col(j);
        out.states.push_back(std::move(v));
    }
    out.measurement = gamma * build_pauli_like_measurement(d);
    out.predictions.resize(m);
    for (int j = 0; j < m; ++j) {
        double upart = out.states[j].head(half).squaredNorm();
        double wpart = out.states[j].tail(half).squaredNorm();
        out.predictions(j) = gamma * (upart - wpart);
    }
    return out;
}

LambdaStats minima_lambda_stats(int d, int m, double gamma, int num_samples, double epsilon,
                                std::uint64_t seed, std::uint64_t stream_base) {
    if (num_samples < 1) throw std::invalid_argument("minima_lambda_stats: need samples >= 1");
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw std::invalid_argument("minima_lambda_stats: epsilon must lie in [0, 1)");
    }
    LambdaStats st;
    st.num_samples = num_samples;
    st.values.reserve(num_samples);
    for (int k = 0; k < num_samples; ++k) {
        RngStream rng(seed, stream_base + static_cast<std::uint64_t>(k));
        st.values.push_back(sample_global_minimum(d, m, gamma, rng).lambda_min);
    }
    std::sort(st.values.begin(), st.values.end());
    double g2 = gamma * gamma;
    st.threshold = (1.0 - epsilon) * 2.0 * g2 * (1.0 - 1.0 / g2);
    st.q05 = quantile(st.values, 0.05);
    st.median = quantile(st.values, 0.5);
    st.q95 = quantile(st.values, 0.95);
    double sum = 0.0;
    int above = 0;
    for (double v : st.values) {
        sum += v;
        if (v >= st.threshold) ++above;
    }
    st.mean = sum / num_samples;
    st.fraction_above = static_cast<double>(above) / num_samples;
    return st;
}

bool hadamard_opnorm_bound_holds(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("hadamard_opnorm_bound_holds: shape mismatch");
    }
    require_hermitian(a, 1e-10, "hadamard bound lhs");
    require_hermitian(b, 1e-10, "hadamard bound rhs");
    Matrix had = a.cwiseProduct(b);
    return op_norm(had) <= op_norm(a) * op_norm(b) + 1e-10;
}

}  // namespace qnndyn
