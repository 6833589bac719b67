#include "eqevid/ensemble.hpp"

#include <cmath>

#include "eqevid/errors.hpp"
#include "eqevid/metrics.hpp"

namespace eqevid {

EnsembleStats ensemble_stats(std::span<const Vec3> members) {
    if (members.size() < 2) throw InputError("ensemble_stats: need at least two members");
    const double k = static_cast<double>(members.size());
    EnsembleStats out;
    for (const Vec3& m : members) out.mean += m;
    out.mean *= 1.0 / k;
    for (const Vec3& m : members) out.cov += outer(m - out.mean);
    out.cov *= 1.0 / k;
    return out;
}

double ensemble_pit(const Vec3& e, const SymMat3& cov, double sigma_sq) {
    return pit_gaussian(e, cov + sigma_sq * SymMat3::identity());
}

double ensemble_coverage(std::span<const Vec3> residuals, std::span<const SymMat3> covs,
                         double sigma_sq, double p_target) {
    if (residuals.empty() || residuals.size() != covs.size()) {
        throw InputError("ensemble_coverage: need matching nonempty residuals and covariances");
    }
    std::size_t covered = 0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        try {
            if (ensemble_pit(residuals[i], covs[i], sigma_sq) <= p_target) ++covered;
        } catch (const NotPositiveDefinite&) {
            // zero-width predictive: covered only by an exact hit, which we ignore
        }
    }
    return static_cast<double>(covered) / static_cast<double>(residuals.size());
}

Sigma2Fit calibrate_sigma2(std::span<const Vec3> val_residuals, std::span<const SymMat3> val_covs,
                           const EnsembleCalibration& cal) {
    auto coverage = [&](double s2) {
        return ensemble_coverage(val_residuals, val_covs, s2, cal.p_target);
    };

    Sigma2Fit fit;
    const double c0 = coverage(0.0);
    if (c0 >= cal.p_target - cal.coverage_tol) {
        fit.coverage = c0;
        return fit;
    }

    double lo = 0.0;
    double hi = 1.0;
    double c_hi = coverage(hi);
    while (c_hi < cal.p_target) {
        if (std::abs(c_hi - cal.p_target) <= cal.coverage_tol) break;
        lo = hi;
        hi *= 2.0;
        ++fit.iterations;
        if (hi > cal.sigma_sq_cap) {
            fit.sigma_sq = cal.sigma_sq_cap;
            fit.coverage = coverage(cal.sigma_sq_cap);
            fit.reached = fit.coverage >= cal.p_target - cal.coverage_tol;
            return fit;
        }
        c_hi = coverage(hi);
    }
    if (std::abs(c_hi - cal.p_target) <= cal.coverage_tol) {
        fit.sigma_sq = hi;
        fit.coverage = c_hi;
        return fit;
    }

    // coverage(lo) < target < coverage(hi)
    double mid = hi;
    double c_mid = c_hi;
    while (hi - lo > cal.width_tol) {
        mid = 0.5 * (lo + hi);
        c_mid = coverage(mid);
        ++fit.iterations;
        if (std::abs(c_mid - cal.p_target) <= cal.coverage_tol) break;
        if (c_mid < cal.p_target) lo = mid; else hi = mid;
    }
    fit.sigma_sq = mid;
    fit.coverage = c_mid;
    fit.reached = std::abs(c_mid - cal.p_target) <= cal.coverage_tol;
    return fit;
}

} // namespace eqevid
