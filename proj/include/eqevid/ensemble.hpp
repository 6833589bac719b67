#pragma once

// Deep-ensemble baseline: member aggregation and isotropic variance-floor
// calibration by coverage matching.

#include <span>
#include <vector>

#include "eqevid/linalg3.hpp"

namespace eqevid {

struct EnsembleStats {
    Vec3 mean;
    SymMat3 cov;  // population (1/K) covariance
};

/// Throws InputError when fewer than two members are given.
EnsembleStats ensemble_stats(std::span<const Vec3> members);

struct EnsembleCalibration {
    double p_target = 0.9;
    double coverage_tol = 0.005;
    double width_tol = 1e-10;
    double sigma_sq_cap = 1e12;
};

struct Sigma2Fit {
    double sigma_sq = 0.0;
    double coverage = 0.0;  // Obs_val(p_target) at sigma_sq
    bool reached = true;    // false when the target is unreachable below the cap
    int iterations = 0;
};

/// Coverage Obs(p_target) of Gaussian PITs with covariance cov_i + sigma_sq I.
/// Non positive-definite covariances count as uncovered.
double ensemble_coverage(std::span<const Vec3> residuals, std::span<const SymMat3> covs,
                         double sigma_sq, double p_target);

/// Bisection on sigma_sq so that validation coverage at p_target matches.
Sigma2Fit calibrate_sigma2(std::span<const Vec3> val_residuals, std::span<const SymMat3> val_covs,
                           const EnsembleCalibration& cal = {});

/// pit_gaussian with cov + sigma_sq I. Throws NotPositiveDefinite when singular.
double ensemble_pit(const Vec3& e, const SymMat3& cov, double sigma_sq);

} // namespace eqevid
