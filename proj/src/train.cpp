#include "qnndyn/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qnndyn/errors.hpp"

namespace qnndyn {

namespace {

// One full pass over the dataset at fixed θ. Produces predictions, residuals,
// the loss, the gradient and the per-sample tangent coefficients
// a(j,l) = tr(i[M(θ), ρ_j] H̃_l), all in O(m p d²) by propagating vectors
// through the circuit layers instead of conjugating d×d matrices.
//
// Layer bookkeeping: with W_l = U_{1:l-1}(θ) U_0 and U(θ) = S_l W_l,
//   a(j,l) = -2 Im( (W_l v_j)† H (W_l M v_j) )   and   W_l M v_j = S_l† M0 U v_j,
// so a forward sweep gives W_l v_j and a backward sweep gives S_l† M0 U v_j.
class Evaluator {
public:
    Evaluator(const PeriodicAnsatz& ansatz, const TrainingSet& dataset, const Measurement& meas)
        : ansatz_(ansatz), ds_(dataset), meas_(meas) {
        if (dataset.dim != ansatz.dim) {
            throw std::invalid_argument("dataset dimension does not match ansatz");
        }
        if (meas.base.rows() != ansatz.dim) {
            throw std::invalid_argument("measurement dimension does not match ansatz");
        }
        require_hermitian(meas.base, 1e-12, "measurement base");
        if (meas.gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
        const int d = ansatz.dim, p = ansatz.num_params, m = dataset.size;
        fwd_.resize(d, p);
        x_.resize(d);
        t_.resize(d);
        ht_.resize(d);
        uv_.resize(d, m);
        gp_.resize(d, m);
        a_.resize(m, p);
        preds_.resize(m);
        resid_.resize(m);
        phases_.resize(d);
        if (!ansatz.generator_diagonal) tmp_.resize(d);
    }

    void run(const RealVector& theta) {
        const int d = ansatz_.dim, p = ansatz_.num_params, m = ds_.size;
        if (theta.size() != p) throw std::invalid_argument("theta length mismatch");
        const double gamma = meas_.gamma;
        for (int j = 0; j < m; ++j) {
            x_.noalias() = ansatz_.fixed_unitaries[0] * ds_.states[j];
            for (int l = 1; l <= p; ++l) {
                fwd_.col(l - 1) = x_;
                rotate(theta(l - 1), x_);
                t_.noalias() = ansatz_.fixed_unitaries[l] * x_;
                x_.swap(t_);
            }
            uv_.col(j) = x_;
            gp_.col(j).noalias() = meas_.base * x_;
            Complex yh = x_.dot(gp_.col(j));
            preds_(j) = gamma * real_checked(yh, 1e-9, "prediction");
            resid_(j) = ds_.labels(j) - preds_(j);

            t_ = gp_.col(j);
            for (int l = p; l >= 1; --l) {
                x_.noalias() = ansatz_.fixed_unitaries[l].adjoint() * t_;
                rotate(-theta(l - 1), x_);
                t_.swap(x_);
                // t_ = S_l† M0 U v_j; pair with the forward state
                Complex z;
                if (ansatz_.generator_diagonal) {
                    z = fwd_.col(l - 1).conjugate()
                            .cwiseProduct(ansatz_.gen_eigvals.cast<Complex>())
                            .cwiseProduct(t_)
                            .sum();
                } else {
                    ht_.noalias() = ansatz_.generator * t_;
                    z = fwd_.col(l - 1).dot(ht_);
                }
                a_(j, l - 1) = -2.0 * z.imag();
            }
        }
        loss_ = resid_.squaredNorm() / (2.0 * m);
        grad_.noalias() = -(gamma / m) * (a_.transpose() * resid_);
    }

    double loss_value() const { return loss_; }
    const RealVector& preds() const { return preds_; }
    const RealVector& resid() const { return resid_; }
    const RealVector& gradient() const { return grad_; }

    // γ² λ_max of the tangent kernel Gram a aᵀ and λ_min of the asymptotic
    // kernel, both m×m, from quantities already on hand.
    KernelSummary kernel_summary() const {
        const int m = ds_.size;
        const double g2 = meas_.gamma * meas_.gamma;
        RealMatrix kfull = g2 * (a_ * a_.transpose());
        Eigen::SelfAdjointEigenSolver<RealMatrix> full_eig(kfull, Eigen::EigenvaluesOnly);

        Matrix svv = uv_.adjoint() * uv_;
        Matrix svg = uv_.adjoint() * gp_;
        Matrix sgg = gp_.adjoint() * gp_;
        RealMatrix kasym(m, m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                kasym(i, j) = g2 * (-2.0 * (svg(i, j) * svg(j, i)).real() +
                                    2.0 * (svv(i, j) * sgg(j, i)).real());
            }
        }
        Eigen::SelfAdjointEigenSolver<RealMatrix> asym_eig(kasym, Eigen::EigenvaluesOnly);
        return {asym_eig.eigenvalues().minCoeff(), full_eig.eigenvalues().maxCoeff()};
    }

private:
    void rotate(double angle, Vector& v) {
        const int d = ansatz_.dim;
        for (int k = 0; k < d; ++k) {
            phases_(k) = std::exp(Complex(0.0, -angle * ansatz_.gen_eigvals(k)));
        }
        if (ansatz_.generator_diagonal) {
            v.array() *= phases_.array();
        } else {
            tmp_.noalias() = ansatz_.gen_eigvecs.adjoint() * v;
            tmp_.array() *= phases_.array();
            v.noalias() = ansatz_.gen_eigvecs * tmp_;
        }
    }

    const PeriodicAnsatz& ansatz_;
    const TrainingSet& ds_;
    const Measurement& meas_;
    Matrix fwd_, uv_, gp_;
    Vector x_, t_, ht_, phases_, tmp_;
    RealMatrix a_;
    RealVector preds_, resid_, grad_;
    double loss_ = 0.0;
};

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning_rate must be positive and finite");
    }
    if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
    if (early_stop_loss < 0.0) throw std::invalid_argument("early_stop_loss must be >= 0");
    if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
    if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
    if (divergence_factor <= 1.0) throw std::invalid_argument("divergence_factor must exceed 1");
}

RealVector predictions(const PeriodicAnsatz& ansatz, const RealVector& theta,
                       const TrainingSet& dataset, const Measurement& meas) {
    Evaluator ev(ansatz, dataset, meas);
    ev.run(theta);
    return ev.preds();
}

double loss(const PeriodicAnsatz& ansatz, const RealVector& theta, const TrainingSet& dataset,
            const Measurement& meas) {
    Evaluator ev(ansatz, dataset, meas);
    ev.run(theta);
    return ev.loss_value();
}

RealVector residuals(const PeriodicAnsatz& ansatz, const RealVector& theta,
                     const TrainingSet& dataset, const Measurement& meas) {
    Evaluator ev(ansatz, dataset, meas);
    ev.run(theta);
    return ev.resid();
}

RealVector grad(const PeriodicAnsatz& ansatz, const RealVector& theta, const TrainingSet& dataset,
                const Measurement& meas) {
    Evaluator ev(ansatz, dataset, meas);
    ev.run(theta);
    return ev.gradient();
}

Trajectory train_gd(const PeriodicAnsatz& ansatz, const TrainingSet& dataset,
                    const Measurement& meas, const TrainConfig& config) {
    config.validate();
    Evaluator ev(ansatz, dataset, meas);
    const int p = ansatz.num_params;

    Trajectory traj;
    RealVector theta = RealVector::Zero(p);
    double loss0 = 0.0;
    double last_logged = 0.0;
    auto start = std::chrono::steady_clock::now();

    auto log_step = [&](int iter) {
        TrajectoryStep s;
        s.iter = iter;
        s.time = iter * config.learning_rate;
        s.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        s.loss = ev.loss_value();
        s.residuals = ev.resid();
        s.predictions = ev.preds();
        s.theta_disp_2 = theta.norm();
        s.theta_disp_inf = p > 0 ? theta.cwiseAbs().maxCoeff() : 0.0;
        s.kernel = ev.kernel_summary();
        if (config.record_theta) s.theta = theta;
        if (!traj.steps.empty() && s.loss > last_logged + 1e-12) {
            ++traj.monotone_violations;
        }
        last_logged = s.loss;
        traj.steps.push_back(std::move(s));
    };

    for (int iter = 0; iter <= config.max_iters; ++iter) {
        ev.run(theta);
        double l = ev.loss_value();
        if (!std::isfinite(l)) {
            throw NumericalError("train_gd: loss is not finite at iteration " +
                                 std::to_string(iter));
        }
        if (iter == 0) loss0 = l;
        if (l > config.divergence_factor * loss0 && iter > 0) {
            throw NumericalError("train_gd: loss " + std::to_string(l) + " exceeded " +
                                 std::to_string(config.divergence_factor) + "x initial loss at iteration " +
                                 std::to_string(iter));
        }
        bool stop = config.early_stop_loss > 0.0 && l < config.early_stop_loss;
        bool last = iter == config.max_iters || stop;
        if (iter % config.log_every == 0 || last) log_step(iter);
        traj.iters_run = iter;
        if (last) {
            traj.stopped_early = stop;
            break;
        }
        theta.noalias() -= config.learning_rate * ev.gradient();
    }
    traj.theta_final = theta;
    traj.loss_final = traj.steps.back().loss;
    return traj;
}

SublinearConstants sublinear_bound_constants(const PeriodicAnsatz& ansatz, double eta,
                                             double loss0) {
    if (!(eta > 0.0)) throw std::invalid_argument("sublinear_bound_constants: eta must be > 0");
    if (!(loss0 > 0.0)) {
        throw std::invalid_argument("sublinear_bound_constants: loss0 must be > 0");
    }
    double hn = op_norm(ansatz.generator);
    return {1.0 / std::sqrt(loss0), 12.0 * eta * ansatz.num_params * hn * hn};
}

}  // namespace qnndyn
