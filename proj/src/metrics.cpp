#include "eqevid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "eqevid/errors.hpp"
#include "eqevid/specfun.hpp"

namespace eqevid {

double pit_gaussian(const Vec3& e, const SymMat3& sigma) {
    return chi2_cdf(mahalanobis_sq(e, sigma), 3.0);
}

double pit_student(const Vec3& e, const PredictiveT& pred) {
    return f_cdf(mahalanobis_sq(e, pred.scale) / 3.0, 3.0, pred.dof);
}

double pit(const Vec3& y, const PredictiveFamily& family) {
    if (const auto* g = std::get_if<GaussianPredictive>(&family)) return pit_gaussian(y - g->mean, g->cov);
    const auto& s = std::get<StudentPredictive>(family);
    return pit_student(y - s.mean, s.t);
}

std::vector<double> default_grid() {
    std::vector<double> grid(99);
    for (int m = 0; m < 99; ++m) grid[m] = (m + 1) / 100.0;
    return grid;
}

std::vector<double> calibration_curve(std::span<const double> u, std::span<const double> grid) {
    if (u.empty()) throw InputError("calibration_curve: no PIT values");
    std::vector<double> sorted(u.begin(), u.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> obs;
    obs.reserve(grid.size());
    for (double p : grid) {
        const auto count = std::upper_bound(sorted.begin(), sorted.end(), p) - sorted.begin();
        obs.push_back(static_cast<double>(count) / static_cast<double>(sorted.size()));
    }
    return obs;
}

double ce_l1(std::span<const double> obs, std::span<const double> grid) {
    double acc = 0.0;
    for (std::size_t m = 0; m < grid.size(); ++m) acc += std::abs(obs[m] - grid[m]);
    return acc / static_cast<double>(grid.size());
}

double coverage_at(std::span<const double> u, double p_star) {
    if (u.empty()) throw InputError("coverage_at: no PIT values");
    const auto count = std::count_if(u.begin(), u.end(), [&](double v) { return v <= p_star; });
    return static_cast<double>(count) / static_cast<double>(u.size());
}

double neg_log_density(const Vec3& y, const PredictiveFamily& family) {
    if (const auto* g = std::get_if<GaussianPredictive>(&family)) {
        const Cholesky3 l = factor_spd(g->cov);
        return 0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + logdet(l) +
                      mahalanobis_sq(y - g->mean, l));
    }
    const auto& s = std::get<StudentPredictive>(family);
    const double m = s.t.dof;
    const Cholesky3 l = factor_spd(s.t.scale);
    const double maha = mahalanobis_sq(y - s.mean, l);
    return -ln_gamma(0.5 * (m + 3.0)) + ln_gamma(0.5 * m) + 1.5 * std::log(m * std::numbers::pi) +
           0.5 * logdet(l) + 0.5 * (m + 3.0) * std::log1p(maha / m);
}

double nll_score(std::span<const Vec3> y, std::span<const PredictiveFamily> families) {
    if (y.empty() || y.size() != families.size()) throw InputError("nll_score: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += neg_log_density(y[i], families[i]);
    return acc / static_cast<double>(y.size());
}

std::vector<Vec3> sample_family(const PredictiveFamily& family, std::mt19937_64& rng,
                                std::size_t n) {
    if (const auto* s = std::get_if<StudentPredictive>(&family)) {
        return sample_predictive(s->t, s->mean, rng, n);
    }
    const auto& g = std::get<GaussianPredictive>(family);
    // Symmetric square root tolerates a singular covariance.
    const EigenSym3 e = eig_sym3(g.cov);
    Mat3 root;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) {
                acc += e.vectors(i, k) * std::sqrt(std::max(e.values[k], 0.0)) * e.vectors(j, k);
            }
            root(i, j) = acc;
        }
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 z{n01(rng), n01(rng), n01(rng)};
        out.push_back(g.mean + root * z);
    }
    return out;
}

double energy_score(const Vec3& y, const PredictiveFamily& family, std::mt19937_64& rng,
                    std::size_t n_samples) {
    if (n_samples < 2) throw InputError("energy_score: need at least two samples");
    const std::vector<Vec3> x = sample_family(family, rng, n_samples);
    const std::vector<Vec3> x2 = sample_family(family, rng, n_samples);
    double to_obs = 0.0, spread = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        to_obs += norm(x[s] - y);
        spread += norm(x[s] - x2[s]);
    }
    const double n = static_cast<double>(n_samples);
    return to_obs / n - 0.5 * spread / n;
}

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

SpearmanResult spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw InputError("spearman: need two equal-length lists of at least two values");
    }
    const std::vector<double> ra = midranks(a);
    const std::vector<double> rb = midranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean, db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return {0.0, true};
    return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

void fill_calibration(CalibrationReport& report, std::span<const double> u) {
    report.grid = default_grid();
    report.obs = calibration_curve(u, report.grid);
    report.ce_l1 = ce_l1(report.obs, report.grid);
    report.coverage.clear();
    for (double p : {0.8, 0.9, 0.95}) report.coverage.emplace_back(p, coverage_at(u, p));
    report.n = u.size();
}

} // namespace eqevid
