#include "eqevid/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eqevid/ensemble.hpp"
#include "eqevid/errors.hpp"

namespace eqevid {

namespace {

void finish_report(EvalResult& res, std::span<const double> pits, std::span<const double> u,
                   std::span<const double> err_norm) {
    CalibrationReport& r = res.report;
    fill_calibration(r, pits);
    if (u.size() >= 2) {
        const SpearmanResult s = spearman(u, err_norm);
        r.spearman_rho = s.rho;
        r.spearman_degenerate = s.degenerate;
    } else {
        r.spearman_degenerate = true;
    }
}

} // namespace

EvalResult evaluate(const ModelParams& params, const HeadConfig& head,
                    const std::vector<Configuration>& split, std::mt19937_64& rng,
                    const EvalOptions& options) {
    EvalResult res;
    std::vector<double> pits, u, err_norm;
    double abs_err = 0.0, nll_acc = 0.0, es_acc = 0.0, u_acc = 0.0;
    for (const Configuration& c : split) {
        const std::vector<RawHeadOutputs> heads = head_outputs(c, params);
        for (std::size_t i = 0; i < heads.size(); ++i) {
            const EvidentialOutput out = evaluate_head(heads[i], head);
            const StudentPredictive fam{out.gamma, predictive(out)};
            const UncertaintyDecomposition unc = decompose_uncertainty(out);
            AtomEval a;
            a.error = c.forces[i] - out.gamma;
            a.pit = pit_student(a.error, fam.t);
            a.u_scalar = unc.u_scalar;
            a.u_ale = unc.u_ale;
            a.u_epi = unc.u_epi;
            abs_err += std::abs(a.error.x) + std::abs(a.error.y) + std::abs(a.error.z);
            nll_acc += neg_log_density(c.forces[i], fam);
            es_acc += energy_score(c.forces[i], fam, rng, options.es_samples);
            u_acc += a.u_scalar;
            pits.push_back(a.pit);
            u.push_back(a.u_scalar);
            err_norm.push_back(norm(a.error));
            res.atoms.push_back(a);
        }
    }
    if (res.atoms.empty()) throw InputError("evaluate: split has no atoms");
    const double n = static_cast<double>(res.atoms.size());
    res.report.force_mae = abs_err / (3.0 * n);
    res.report.nll = nll_acc / n;
    res.report.energy_score = es_acc / n;
    res.report.mean_u_scalar = u_acc / n;
    finish_report(res, pits, u, err_norm);
    return res;
}

void ensemble_residuals(std::span<const ModelParams> members,
                        const std::vector<Configuration>& split, std::vector<Vec3>& residuals,
                        std::vector<SymMat3>& covs) {
    residuals.clear();
    covs.clear();
    for (const Configuration& c : split) {
        std::vector<std::vector<Vec3>> f;
        f.reserve(members.size());
        for (const ModelParams& m : members) f.push_back(forces(c, m));
        std::vector<Vec3> at(members.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            for (std::size_t k = 0; k < members.size(); ++k) at[k] = f[k][i];
            const EnsembleStats st = ensemble_stats(at);
            residuals.push_back(c.forces[i] - st.mean);
            covs.push_back(st.cov);
        }
    }
}

EvalResult evaluate_ensemble(std::span<const ModelParams> members, double sigma_sq,
                             const std::vector<Configuration>& split, std::mt19937_64& rng,
                             const EvalOptions& options) {
    std::vector<Vec3> residuals;
    std::vector<SymMat3> covs;
    ensemble_residuals(members, split, residuals, covs);
    if (residuals.empty()) throw InputError("evaluate_ensemble: split has no atoms");

    EvalResult res;
    std::vector<double> pits, u, err_norm;
    double abs_err = 0.0, nll_acc = 0.0, es_acc = 0.0, u_acc = 0.0;
    std::size_t n_density = 0;
    const Vec3 origin{};
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        const SymMat3 cov = covs[i] + sigma_sq * SymMat3::identity();
        const GaussianPredictive fam{origin, cov};
        AtomEval a;
        a.error = residuals[i];
        a.u_epi = SpdMat3(covs[i]);
        a.u_ale = SpdMat3(sigma_sq * SymMat3::identity());
        a.u_scalar = std::sqrt(std::max(trace(covs[i]), 0.0) / 3.0);
        try {
            a.pit = pit_gaussian(a.error, cov);
            nll_acc += neg_log_density(a.error, fam);
            ++n_density;
        } catch (const NotPositiveDefinite&) {
            a.pit = 1.0;
        }
        es_acc += energy_score(a.error, fam, rng, options.es_samples);
        abs_err += std::abs(a.error.x) + std::abs(a.error.y) + std::abs(a.error.z);
        u_acc += a.u_scalar;
        pits.push_back(a.pit);
        u.push_back(a.u_scalar);
        err_norm.push_back(norm(a.error));
        res.atoms.push_back(a);
    }
    const double n = static_cast<double>(res.atoms.size());
    res.report.force_mae = abs_err / (3.0 * n);
    res.report.nll = n_density > 0 ? nll_acc / static_cast<double>(n_density) : 0.0;
    res.report.energy_score = es_acc / n;
    res.report.mean_u_scalar = u_acc / n;
    finish_report(res, pits, u, err_norm);
    return res;
}

namespace {

struct AtomPrediction {
    std::vector<Vec3> force;
    std::vector<SymMat3> u_epi;
    std::vector<double> u_scalar;
};

AtomPrediction predict_atoms(const Configuration& c, const ModelParams& params,
                             const HeadConfig& head) {
    AtomPrediction p;
    for (const RawHeadOutputs& h : head_outputs(c, params)) {
        const EvidentialOutput out = evaluate_head(h, head);
        const UncertaintyDecomposition u = decompose_uncertainty(out);
        p.force.push_back(out.gamma);
        p.u_epi.push_back(u.u_epi);
        p.u_scalar.push_back(u.u_scalar);
    }
    return p;
}

} // namespace

EquivarianceResult verify_equivariance(const ModelParams& params, const HeadConfig& head,
                                       const std::vector<Configuration>& sample,
                                       std::span<const Rotation3> rotations) {
    EquivarianceResult res;
    std::vector<AtomPrediction> base;
    std::vector<double> u0, e0;
    for (const Configuration& c : sample) {
        base.push_back(predict_atoms(c, params, head));
        for (std::size_t i = 0; i < c.size(); ++i) {
            u0.push_back(base.back().u_scalar[i]);
            e0.push_back(norm(c.forces[i] - base.back().force[i]));
        }
    }
    const bool rank_ok = u0.size() >= 2;
    if (rank_ok) res.rho_original = spearman(u0, e0).rho;

    for (std::size_t r = 0; r < rotations.size(); ++r) {
        const Rotation3& rot = rotations[r];
        std::vector<double> u1, e1;
        for (std::size_t c = 0; c < sample.size(); ++c) {
            const Configuration rc = transform_configuration(sample[c], rot);
            const AtomPrediction p = predict_atoms(rc, params, head);
            for (std::size_t i = 0; i < rc.size(); ++i) {
                const Vec3 df = p.force[i] - rot * base[c].force[i];
                for (int k = 0; k < 3; ++k) {
                    res.records.push_back({static_cast<int>(r), static_cast<int>(c), static_cast<int>(i), 0, k, df[k]});
                    res.max_force_dev = std::max(res.max_force_dev, std::abs(df[k]));
                }
                const SymMat3 du = p.u_epi[i] - conjugate(rot, base[c].u_epi[i]);
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) {
                        const double v = du(a, b);
                        res.records.push_back({static_cast<int>(r), static_cast<int>(c), static_cast<int>(i), 1, 3 * a + b, v});
                        res.max_cov_dev = std::max(res.max_cov_dev, std::abs(v));
                    }
                }
                u1.push_back(p.u_scalar[i]);
                e1.push_back(norm(rc.forces[i] - p.force[i]));
            }
        }
        if (rank_ok) {
            const double rho = spearman(u1, e1).rho;
            res.rho_rotated.push_back(rho);
            res.max_abs_delta_rho = std::max(res.max_abs_delta_rho, std::abs(rho - res.rho_original));
        }
    }
    return res;
}

EquivarianceResult verify_equivariance(const ModelParams& params, const HeadConfig& head,
                                       const std::vector<Configuration>& sample,
                                       int n_rotations, std::mt19937_64& rng) {
    if (n_rotations < 1) throw InputError("verify_equivariance: need at least one rotation");
    std::vector<Rotation3> rots;
    rots.reserve(n_rotations);
    for (int k = 0; k < n_rotations; ++k) rots.push_back(sample_rotation(rng));
    return verify_equivariance(params, head, sample, rots);
}

std::vector<std::pair<double, std::size_t>> deviation_histogram(
    const std::vector<DeviationRecord>& records, int kind, int bins) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : records) {
        if (r.kind != kind) continue;
        lo = std::min(lo, r.value);
        hi = std::max(hi, r.value);
    }
    std::vector<std::pair<double, std::size_t>> out;
    if (bins < 1 || !(lo <= hi)) return out;
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / bins;
    out.resize(bins);
    for (int b = 0; b < bins; ++b) out[b] = {lo + (b + 0.5) * width, 0};
    for (const auto& r : records) {
        if (r.kind != kind) continue;
        const int b = std::min(bins - 1, static_cast<int>((r.value - lo) / width));
        ++out[b].second;
    }
    return out;
}

} // namespace eqevid
