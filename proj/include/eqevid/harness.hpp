#pragma once

// Evaluation, equivariance verification and ensemble evaluation.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "eqevid/evidential.hpp"
#include "eqevid/metrics.hpp"
#include "eqevid/toymodel.hpp"

namespace eqevid {

struct EvalOptions {
    std::size_t es_samples = 128;
};

/// Per-atom quantities behind a CalibrationReport.
struct AtomEval {
    Vec3 error;        // y - gamma
    double pit = 0.0;
    double u_scalar = 0.0;
    SpdMat3 u_ale;
    SpdMat3 u_epi;
};

struct EvalResult {
    CalibrationReport report;
    std::vector<AtomEval> atoms;
};

/// Student-t evaluation of an evidential model on a set of configurations.
EvalResult evaluate(const ModelParams& params, const HeadConfig& head,
                    const std::vector<Configuration>& split, std::mt19937_64& rng,
                    const EvalOptions& options = {});

/// Gaussian evaluation of an ensemble with covariance Sigma_epi + sigma_sq I.
/// Atoms with a singular covariance get PIT 1 and are left out of NLL.
EvalResult evaluate_ensemble(std::span<const ModelParams> members, double sigma_sq,
                             const std::vector<Configuration>& split, std::mt19937_64& rng,
                             const EvalOptions& options = {});

/// Ensemble residuals and epistemic covariances, one entry per atom.
void ensemble_residuals(std::span<const ModelParams> members,
                        const std::vector<Configuration>& split, std::vector<Vec3>& residuals,
                        std::vector<SymMat3>& covs);

struct DeviationRecord {
    int rotation = 0;
    int config = 0;
    int atom = 0;
    int kind = 0;       // 0: force, 1: epistemic covariance
    int component = 0;  // 0..2 for forces, 0..8 (row-major) for covariances
    double value = 0.0;
};

struct EquivarianceResult {
    double max_force_dev = 0.0;
    double max_cov_dev = 0.0;
    std::vector<DeviationRecord> records;
    std::vector<double> rho_rotated;  // Spearman rho per rotated copy
    double rho_original = 0.0;
    double max_abs_delta_rho = 0.0;
};

/// dF = F(Rx) - R F(x), dU = U_epi(Rx) - R U_epi(x) R^T for each rotation
/// and configuration; also the Spearman shift rho(R split) - rho(split).
EquivarianceResult verify_equivariance(const ModelParams& params, const HeadConfig& head,
                                       const std::vector<Configuration>& sample,
                                       std::span<const Rotation3> rotations);
EquivarianceResult verify_equivariance(const ModelParams& params, const HeadConfig& head,
                                       const std::vector<Configuration>& sample,
                                       int n_rotations, std::mt19937_64& rng);

/// Histogram of deviation values: (bin_center, count) over `bins` equal bins.
std::vector<std::pair<double, std::size_t>> deviation_histogram(
    const std::vector<DeviationRecord>& records, int kind, int bins);

} // namespace eqevid
