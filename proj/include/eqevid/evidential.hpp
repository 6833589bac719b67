#pragma once

// Normal-Inverse-Wishart evidential head for 3-vector targets.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "eqevid/irreps.hpp"
#include "eqevid/linalg3.hpp"
#include "eqevid/stabilizer.hpp"

namespace eqevid {

inline constexpr int kDim = 3;
inline constexpr double kEvidenceEpsilon = 1e-6;

struct LossWeights {
    double energy = 1.0;
    double forces = 10000.0;
    double reg = 0.1;
};

/// How covariance coefficients become Sigma0. `damping = false` is the
/// stabilization ablation.
struct HeadConfig {
    DamperConfig damper;
    bool damping = true;
};

/// Unconstrained per-atom head outputs.
struct RawHeadOutputs {
    Vec3 gamma;
    double nu_hat = 0.0;
    double kappa_hat = 0.0;
    IrrepCoeffs z;
};

/// Gradient with the same layout as RawHeadOutputs.
struct RawHeadGrad {
    Vec3 gamma;
    double nu_hat = 0.0;
    double kappa_hat = 0.0;
    IrrepCoeffs z;
};

/// NIW parameters (gamma, Sigma0, nu, kappa); Psi = nu * Sigma0.
struct EvidentialOutput {
    Vec3 gamma;
    SpdMat3 sigma0;
    double nu = kDim + 2.0;
    double kappa = 1.0;
};

/// Multivariate Student-t predictive St_dof(gamma, scale).
struct PredictiveT {
    double dof = 1.0;
    SpdMat3 scale;
};

struct UncertaintyDecomposition {
    SpdMat3 u_ale;
    SpdMat3 u_epi;
    double u_scalar = 0.0;
};

struct EvidenceScalars {
    double nu;
    double kappa;
};

EvidenceScalars constrain_scalars(double nu_hat, double kappa_hat);

/// exp(SymMap(Damp(z))); with `head.damping == false` the damper is skipped.
SpdMat3 build_sigma0(const IrrepCoeffs& z, const HeadConfig& head);
inline SpdMat3 build_sigma0(const IrrepCoeffs& z, const DamperConfig& cfg) {
    return build_sigma0(z, HeadConfig{cfg, true});
}

EvidentialOutput evaluate_head(const RawHeadOutputs& raw, const HeadConfig& head);

PredictiveT predictive(const EvidentialOutput& out);
UncertaintyDecomposition decompose_uncertainty(const EvidentialOutput& out);

/// Expanded Student-t negative log-likelihood (determinant-lemma form).
double nll(const Vec3& y, const EvidentialOutput& out);

/// Same quantity from -(nu/2) log|Psi| + ((nu+1)/2) log|Psi + k/(1+k) v v^T|
/// with an explicit 3x3 determinant; used as a cross-check.
double nll_logdet_form(const Vec3& y, const EvidentialOutput& out);

/// (nu + kappa) |y - gamma|.
double reg_loss(const Vec3& y, const Vec3& gamma, double nu, double kappa);

/// Per-atom force objective weights.forces * (nll + weights.reg * reg) and its
/// gradient with respect to the raw head outputs.
struct AtomLoss {
    double nll = 0.0;
    double reg = 0.0;
    double value = 0.0;
    RawHeadGrad grad;
    SpdMat3 sigma0;
};

AtomLoss loss_and_grad(const Vec3& y, const RawHeadOutputs& raw, const HeadConfig& head,
                       const LossWeights& weights);

struct LossBreakdown {
    double nll = 0.0;     // mean over atoms
    double reg = 0.0;     // mean over atoms
    double energy = 0.0;  // (E_pred - E_ref)^2 / n_atoms
    double total = 0.0;
    std::vector<RawHeadGrad> head_grads;  // d total / d raw outputs
    double energy_grad = 0.0;             // d total / d E_pred
    std::vector<SpdMat3> sigma0;
};

/// total = w_E * energy + w_F * (mean nll + w_reg * mean reg).
LossBreakdown total_loss(std::span<const Vec3> forces_ref, double energy_ref,
                         double energy_pred, std::span<const RawHeadOutputs> heads,
                         const LossWeights& weights, const HeadConfig& head);

/// gamma + L g sqrt(dof / w), g ~ N(0, I), w ~ chi2(dof), L L^T = scale.
std::vector<Vec3> sample_predictive(const PredictiveT& pred, const Vec3& gamma,
                                    std::mt19937_64& rng, std::size_t n);

} // namespace eqevid
