#pragma once

// Calibration and scoring for 3-D vector predictions.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eqevid/evidential.hpp"
#include "eqevid/linalg3.hpp"

namespace eqevid {

/// N(mean, cov); cov may be singular (positive semidefinite) for sampling.
struct GaussianPredictive {
    Vec3 mean;
    SymMat3 cov;
};

/// St_dof(mean, scale).
struct StudentPredictive {
    Vec3 mean;
    PredictiveT t;
};

using PredictiveFamily = std::variant<GaussianPredictive, StudentPredictive>;

/// F_chi2_3(e^T Sigma^{-1} e).
double pit_gaussian(const Vec3& e, const SymMat3& sigma);
/// F_F(3, dof)(e^T Lambda^{-1} e / 3).
double pit_student(const Vec3& e, const PredictiveT& pred);
/// PIT of y under the family (residual y - mean).
double pit(const Vec3& y, const PredictiveFamily& family);

/// 99 levels 0.01 ... 0.99.
std::vector<double> default_grid();

/// Obs(p) = fraction of u <= p, for each grid level. Throws InputError on empty u.
std::vector<double> calibration_curve(std::span<const double> u, std::span<const double> grid);
double ce_l1(std::span<const double> obs, std::span<const double> grid);
double coverage_at(std::span<const double> u, double p_star);

/// -log p(y) under the family.
double neg_log_density(const Vec3& y, const PredictiveFamily& family);
/// Mean of neg_log_density.
double nll_score(std::span<const Vec3> y, std::span<const PredictiveFamily> families);

std::vector<Vec3> sample_family(const PredictiveFamily& family, std::mt19937_64& rng,
                                std::size_t n);

/// Monte Carlo energy score with two independent sample streams of size n.
double energy_score(const Vec3& y, const PredictiveFamily& family, std::mt19937_64& rng,
                    std::size_t n_samples = 128);

struct SpearmanResult {
    double rho = 0.0;
    bool degenerate = false;  // constant input; rho reported as 0
};

/// Midranks for ties.
std::vector<double> midranks(std::span<const double> values);
SpearmanResult spearman(std::span<const double> a, std::span<const double> b);

struct CalibrationReport {
    std::vector<double> grid;
    std::vector<double> obs;
    double ce_l1 = 0.0;
    std::vector<std::pair<double, double>> coverage;  // (p*, Obs(p*))
    double nll = 0.0;
    double energy_score = 0.0;
    double spearman_rho = 0.0;
    bool spearman_degenerate = false;
    double force_mae = 0.0;
    double mean_u_scalar = 0.0;
    std::size_t n = 0;
};

/// Fill grid/obs/ce/coverage (0.8, 0.9, 0.95) from PIT values.
void fill_calibration(CalibrationReport& report, std::span<const double> u);

} // namespace eqevid
