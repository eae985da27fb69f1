#pragma once

#include <cstddef>
#include <optional>

#include "qnndyn/linalg.hpp"
#include "qnndyn/model.hpp"

namespace qnndyn {

// Default cap on the squared dimension of the pair-moment operators
// (d² x d² storage); 4096 corresponds to d = 64 and ~268 MB per operator.
inline constexpr std::size_t kPairMomentDimSqCap = 4096;

// Tangent kernel K_ij = γ² Σ_l tr(i[M(θ), ρ_i] H̃_l) tr(i[M(θ), ρ_j] H̃_l),
// assembled from dense conjugated generators. Real symmetric PSD.
RealMatrix tangent_kernel(const PeriodicAnsatz& ansatz, const RealVector& theta,
                          const TrainingSet& dataset, const Measurement& meas);

// Asymptotic kernel entries -tr([M, ρ_i][M, ρ_j]) for an already-scaled
// measurement M (the scale rides inside M).
RealMatrix asym_kernel_scaled(const Matrix& m_scaled, const TrainingSet& dataset);

// Asymptotic kernel for an unscaled (±1 spectrum) measurement direction:
// γ² · asym_kernel_scaled(m_theta). γ enters only as the γ² prefactor.
RealMatrix asym_kernel(const Matrix& m_theta, const TrainingSet& dataset, double gamma);

// Same kernel through the eigenspace-projection route
// K_ij = 8 γ² Re((u_j†u_i)(w_i†w_j)) with u = Π₊v, w = Π₋v. Requires a ±1
// spectrum; agrees with asym_kernel to high accuracy and exists as an
// independent cross-check.
RealMatrix asym_kernel_projection(const Matrix& m_theta, const TrainingSet& dataset, double gamma);

// Normalized second moment of the conjugated generators,
// Y(θ) = (1/(p Z)) Σ_l H̃_l ⊗ H̃_l with Z = tr(H²)/(d²-1). d² x d².
Matrix second_moment(const PeriodicAnsatz& ansatz, const RealVector& theta,
                     std::size_t dim_sq_cap = kPairMomentDimSqCap);

// Haar limit of the second moment: swap(d) - I/d.
Matrix haar_second_moment(int d);

// Perturbative kernel (K_pert)_ij = tr((C_i ⊗ C_j)(Y - Y_haar)) with
// C_j = i[γ M(θ), ρ_j]. The Kronecker factors are contracted against the
// deviation operator block by block; C_i ⊗ C_j is never formed.
RealMatrix pert_kernel(const PeriodicAnsatz& ansatz, const RealVector& theta,
                       const TrainingSet& dataset, double gamma,
                       std::size_t dim_sq_cap = kPairMomentDimSqCap);

struct EigSummary {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double trace = 0.0;
};

// Extremal eigenvalues and trace of a real symmetric kernel matrix.
// Throws if the asymmetry exceeds sym_tol.
EigSummary eig_summary(const RealMatrix& k, double sym_tol = 1e-10);

struct KernelSnapshot {
    double time = 0.0;
    RealMatrix k_full;
    RealMatrix k_asym;
    std::optional<RealMatrix> k_pert;
    double lambda_min_asym = 0.0;
    double lambda_max_full = 0.0;
    std::optional<double> delta_op_norm;  // ‖Y - Y_haar‖_op when k_pert is present
    bool delta_norm_estimated = false;
};

KernelSnapshot kernel_snapshot(const PeriodicAnsatz& ansatz, const RealVector& theta,
                               const TrainingSet& dataset, const Measurement& meas,
                               bool with_pert, std::size_t dim_sq_cap = kPairMomentDimSqCap);

}  // namespace qnndyn
